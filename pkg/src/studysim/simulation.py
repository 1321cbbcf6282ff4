"""Student-interaction environment.

Given a chosen exercise, the environment predicts a success probability
with the regression forest, samples a binary outcome, predicts a dropout
probability with the classification forest, samples the dropout
decision, and emits a per-step reward. Models are frozen during
episodes; all randomness comes from the per-episode seed.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from studysim.errors import (
    EpisodeDone,
    ExerciseNotAvailable,
    UnknownExercise,
    UnknownUser,
    UnknownWorkbook,
)
from studysim.factorization import FactorModel
from studysim.features import PAD_SCORE
from studysim.forest import Forest
from studysim.persist import write_csv
from studysim.seeding import generator

SIGN_DEVIATION_PENALTY = "deviation-penalty"
SIGN_DEVIATION_BONUS = "deviation-bonus"


@dataclass
class RewardConfig:
    target_score: float = 0.7
    retention_weight: float = 1.0
    sign_mode: str = SIGN_DEVIATION_PENALTY

    def validate(self) -> None:
        if not 0.0 <= self.target_score <= 1.0:
            raise ValueError("target_score must lie in [0, 1]")
        if self.retention_weight < 0:
            raise ValueError("retention_weight must be non-negative")
        if self.sign_mode not in (SIGN_DEVIATION_PENALTY, SIGN_DEVIATION_BONUS):
            raise ValueError(f"unknown sign_mode {self.sign_mode!r}")


def step_reward(score: float, dropout_prob: float, config: RewardConfig) -> float:
    """Per-exercise reward; episode return is the plain sum over steps.

    Default mode penalizes squared deviation from the target score and
    pays for retention; the bonus mode flips the deviation term's sign.
    """
    deviation = (score - config.target_score) ** 2
    retention = config.retention_weight * (1.0 - dropout_prob)
    if config.sign_mode == SIGN_DEVIATION_PENALTY:
        return -deviation + retention
    return deviation + retention


@dataclass
class StepOutcome:
    score: float
    sampled_correct: int
    p_dropout: float
    dropped_out: int
    reward: float


@dataclass
class SimState:
    user_id: str
    workbook_id: str
    user_embedding: np.ndarray
    history: deque
    remaining: set[str]
    workbook_size: int
    step_count: int = 0
    done: bool = False
    cumulative_reward: float = 0.0
    rng: np.random.Generator = field(default_factory=lambda: generator(0))


@dataclass
class TraceStep:
    step: int
    exercise_id: str
    score_prob: float
    sampled_correct: int
    p_dropout: float
    dropped_out: int
    reward: float
    cumulative_reward: float


@dataclass
class EpisodeTrace:
    user_id: str
    workbook_id: str
    steps: list[TraceStep] = field(default_factory=list)

    @property
    def total_return(self) -> float:
        return self.steps[-1].cumulative_reward if self.steps else 0.0


class StudentSimulator:
    """Reward-emitting environment over frozen factor and forest models."""

    def __init__(self, factors: FactorModel, success_forest: Forest,
                 dropout_forest: Forest, workbooks: dict[str, set[str] | list[str]],
                 reward: RewardConfig | None = None, window: int = 10):
        reward = reward or RewardConfig()
        reward.validate()
        self.factors = factors
        self.success_forest = success_forest
        self.dropout_forest = dropout_forest
        self.workbooks = {wb: sorted(exs) for wb, exs in workbooks.items()}
        self.reward = reward
        self.window = window
        self._mean_exercise = factors.mean_exercise_vector()
        self._exercise_vec = {}
        for exs in self.workbooks.values():
            for ex in exs:
                if ex not in self._exercise_vec:
                    self._exercise_vec[ex] = np.array(factors.exercise_vector(ex))

    @property
    def user_ids(self) -> list[str]:
        return sorted(self.factors.user_index)

    @property
    def workbook_ids(self) -> list[str]:
        return sorted(self.workbooks)

    def exercise_vector(self, exercise_id: str) -> np.ndarray:
        try:
            return self._exercise_vec[exercise_id]
        except KeyError:
            raise UnknownExercise(exercise_id) from None

    def sample_start(self, rng: np.random.Generator) -> tuple[str, str]:
        users = self.user_ids
        wbs = self.workbook_ids
        return (users[int(rng.integers(len(users)))],
                wbs[int(rng.integers(len(wbs)))])

    def reset(self, user_id: str, workbook_id: str, seed: int,
              initial_history=None) -> SimState:
        if user_id not in self.factors.user_index:
            raise UnknownUser(user_id)
        if workbook_id not in self.workbooks or not self.workbooks[workbook_id]:
            raise UnknownWorkbook(workbook_id)
        exercises = self.workbooks[workbook_id]
        for ex in exercises:
            self.exercise_vector(ex)  # fail fast on unembeddable exercises
        history = deque(maxlen=self.window)
        if initial_history:
            for ex, score in list(initial_history)[-self.window:]:
                history.append((ex, float(score)))
        return SimState(
            user_id=user_id,
            workbook_id=workbook_id,
            user_embedding=np.array(self.factors.user_vector(user_id)),
            history=history,
            remaining=set(exercises),
            workbook_size=len(exercises),
            rng=generator(seed, 4),
        )

    # -- feature assembly ---------------------------------------------------

    def _feature_prefix(self, state: SimState) -> np.ndarray:
        """[user | windowed (exercise, score) pairs, left-padded]."""
        width = self.factors.hyper.factors
        parts = [state.user_embedding]
        pad = self.window - len(state.history)
        for _ in range(pad):
            parts.append(self._mean_exercise)
            parts.append(np.array([PAD_SCORE]))
        for ex, score in state.history:
            parts.append(self._exercise_vec.get(ex) if ex in self._exercise_vec
                         else self.factors.exercise_vector(ex))
            parts.append(np.array([score]))
        prefix = np.concatenate(parts)
        assert prefix.shape[0] == width + self.window * (width + 1)
        return prefix

    def _success_matrix(self, state: SimState, candidates: list[str]) -> np.ndarray:
        prefix = self._feature_prefix(state)
        width = self.factors.hyper.factors
        X = np.empty((len(candidates), prefix.shape[0] + width))
        X[:, :prefix.shape[0]] = prefix
        for i, ex in enumerate(candidates):
            X[i, prefix.shape[0]:] = self.exercise_vector(ex)
        return X

    def evaluate_candidates(self, state: SimState, candidates: list[str]
                            ) -> tuple[np.ndarray, np.ndarray]:
        """Deterministic per-candidate (success prob, dropout prob) estimates.

        No sampling: the dropout features use the predicted success
        probability as the realized-score slot.
        """
        X = self._success_matrix(state, candidates)
        s_hat = np.clip(self.success_forest.predict(X), 0.0, 1.0)
        X_drop = np.column_stack([X, s_hat])
        p_hat = np.clip(self.dropout_forest.predict(X_drop), 0.0, 1.0)
        return s_hat, p_hat

    # -- dynamics ------------------------------------------------------------

    def step(self, state: SimState, exercise_id: str) -> tuple[SimState, StepOutcome]:
        if state.done:
            raise EpisodeDone("episode already finished")
        if exercise_id not in state.remaining:
            raise ExerciseNotAvailable(exercise_id)

        X = self._success_matrix(state, [exercise_id])
        s_hat = float(np.clip(self.success_forest.predict(X)[0], 0.0, 1.0))
        sampled = 1 if state.rng.random() < s_hat else 0

        x_drop = np.concatenate([X[0], [float(sampled)]])
        p_drop = float(np.clip(self.dropout_forest.predict(x_drop), 0.0, 1.0))
        dropped = 1 if state.rng.random() < p_drop else 0

        reward = step_reward(s_hat, p_drop, self.reward)

        state.history.append((exercise_id, float(sampled)))
        state.remaining.discard(exercise_id)
        state.step_count += 1
        state.cumulative_reward += reward
        state.done = bool(dropped) or not state.remaining

        return state, StepOutcome(score=s_hat, sampled_correct=sampled,
                                  p_dropout=p_drop, dropped_out=dropped,
                                  reward=reward)


def write_traces(path, traces: list[EpisodeTrace]) -> None:
    """Per-step episode trace CSV, one block of rows per episode index."""
    rows = []
    for episode, trace in enumerate(traces):
        for st in trace.steps:
            rows.append((episode, st.step, trace.user_id, st.exercise_id,
                         st.score_prob, st.sampled_correct, st.p_dropout,
                         st.dropped_out, st.reward, st.cumulative_reward))
    write_csv(path, ("episode", "step", "user_id", "exercise_id", "score_prob",
                     "sampled_correct", "p_dropout", "dropped_out", "reward",
                     "cumulative_reward"), rows)


def run_episode(env, select, user_id: str, workbook_id: str, seed: int,
                initial_history=None) -> EpisodeTrace:
    """Drive one episode; ``select(state, candidates)`` picks each exercise."""
    if initial_history is not None:
        state = env.reset(user_id, workbook_id, seed, initial_history=initial_history)
    else:
        state = env.reset(user_id, workbook_id, seed)
    trace = EpisodeTrace(user_id=user_id, workbook_id=workbook_id)
    while not state.done:
        candidates = sorted(state.remaining)
        exercise_id = select(state, candidates)
        state, outcome = env.step(state, exercise_id)
        trace.steps.append(TraceStep(
            step=state.step_count - 1,
            exercise_id=exercise_id,
            score_prob=outcome.score,
            sampled_correct=outcome.sampled_correct,
            p_dropout=outcome.p_dropout,
            dropped_out=outcome.dropped_out,
            reward=outcome.reward,
            cumulative_reward=state.cumulative_reward,
        ))
    return trace
