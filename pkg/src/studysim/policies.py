"""Exercise-selection policies: historical replay, one-step greedy, and a
clipped-surrogate policy-gradient learner with a linear softmax policy.

The policy features are [user embedding | candidate embedding | mean of
windowed scores | episode progress], so gradients stay small enough to
verify against finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from studysim.errors import DivergenceDetected, NoCandidates
from studysim.persist import atomic_write_json, check_snapshot, load_json
from studysim.seeding import generator
from studysim.simulation import step_reward

SNAPSHOT_FORMAT = "studysim.policy"
SNAPSHOT_VERSION = 1

NEUTRAL_SCORE = 0.5


@dataclass
class PolicyParams:
    theta: np.ndarray

    @classmethod
    def zeros(cls, factors: int) -> "PolicyParams":
        return cls(theta=np.zeros(2 * factors + 2))

    def save(self, path) -> None:
        atomic_write_json(path, {
            "format": SNAPSHOT_FORMAT,
            "version": SNAPSHOT_VERSION,
            "theta": [float(x) for x in self.theta],
        })

    @classmethod
    def load(cls, path) -> "PolicyParams":
        doc = load_json(path)
        check_snapshot(doc, SNAPSHOT_FORMAT, SNAPSHOT_VERSION, path)
        return cls(theta=np.asarray(doc["theta"], dtype=np.float64))


@dataclass
class AgentConfig:
    iterations: int = 300
    episodes_per_batch: int = 32
    epsilon: float = 0.2
    learning_rate: float = 0.05
    temperature: float = 1.0
    gamma: float = 0.99
    updates_per_batch: int = 4
    seed: int = 0


def policy_features(state, env, candidates: list[str]) -> np.ndarray:
    """One feature row per candidate; rows share the state block."""
    scores = [s for _, s in state.history]
    mean_score = sum(scores) / len(scores) if scores else NEUTRAL_SCORE
    progress = state.step_count / state.workbook_size
    u = state.user_embedding
    width = u.shape[0]
    X = np.empty((len(candidates), 2 * width + 2))
    X[:, :width] = u
    for i, ex in enumerate(candidates):
        X[i, width:2 * width] = env.exercise_vector(ex)
    X[:, 2 * width] = mean_score
    X[:, 2 * width + 1] = progress
    return X


def _softmax_logits(theta: np.ndarray, phi: np.ndarray, temperature: float
                    ) -> tuple[np.ndarray, np.ndarray]:
    z = phi @ theta / temperature
    z = z - z.max()
    expz = np.exp(z)
    probs = expz / expz.sum()
    log_probs = z - math.log(expz.sum())
    return probs, log_probs


def replay_policy(state, candidates: list[str],
                  historical_order: list[str]) -> str:
    """First exercise of the historical order still available; else lowest id."""
    del state
    if not candidates:
        raise NoCandidates("empty candidate set")
    available = set(candidates)
    for ex in historical_order:
        if ex in available:
            return ex
    return min(candidates)


def greedy_policy(state, candidates: list[str], env, reward_config=None) -> str:
    """Argmax of the one-step reward estimate; ties go to the lowest id."""
    if not candidates:
        raise NoCandidates("empty candidate set")
    ordered = sorted(candidates)
    config = reward_config or env.reward
    s_hat, p_hat = env.evaluate_candidates(state, ordered)
    best_i = 0
    best_r = -np.inf
    for i, (s, p) in enumerate(zip(s_hat, p_hat)):
        r = step_reward(float(s), float(p), config)
        if r > best_r:
            best_r = r
            best_i = i
    return ordered[best_i]


def softmax_select(params: PolicyParams, state, candidates: list[str], env,
                   temperature: float, rng: np.random.Generator
                   ) -> tuple[str, float]:
    """Sample a candidate from the softmax policy; returns (choice, log prob)."""
    if not candidates:
        raise NoCandidates("empty candidate set")
    ordered = sorted(candidates)
    phi = policy_features(state, env, ordered)
    probs, log_probs = _softmax_logits(params.theta, phi, temperature)
    choice = int(rng.choice(len(ordered), p=probs))
    return ordered[choice], float(log_probs[choice])


def argmax_select(params: PolicyParams, state, candidates: list[str], env,
                  temperature: float = 1.0) -> str:
    """Deterministic mode of the policy (used at evaluation time)."""
    if not candidates:
        raise NoCandidates("empty candidate set")
    ordered = sorted(candidates)
    phi = policy_features(state, env, ordered)
    z = phi @ params.theta / temperature
    return ordered[int(np.argmax(z))]


def clipped_surrogate(ratio: float, advantage: float, epsilon: float) -> float:
    clipped = min(max(ratio, 1.0 - epsilon), 1.0 + epsilon)
    return min(ratio * advantage, clipped * advantage)


@dataclass
class _StepRecord:
    phi: np.ndarray
    action: int
    log_prob_old: float
    reward: float
    advantage: float = 0.0


@dataclass
class LearningCurvePoint:
    iteration: int
    mean_return: float
    std_return: float


def _collect_episode(env, params, temperature, rng) -> tuple[list[_StepRecord], float]:
    user_id, workbook_id = env.sample_start(rng)
    state = env.reset(user_id, workbook_id, int(rng.integers(2 ** 62)))
    records: list[_StepRecord] = []
    while not state.done:
        ordered = sorted(state.remaining)
        phi = policy_features(state, env, ordered)
        probs, log_probs = _softmax_logits(params.theta, phi, temperature)
        action = int(rng.choice(len(ordered), p=probs))
        state, outcome = env.step(state, ordered[action])
        records.append(_StepRecord(phi=phi, action=action,
                                   log_prob_old=float(log_probs[action]),
                                   reward=outcome.reward))
    return records, state.cumulative_reward


def _assign_advantages(episodes: list[list[_StepRecord]], gamma: float) -> None:
    returns = []
    for records in episodes:
        g = 0.0
        for rec in reversed(records):
            g = rec.reward + gamma * g
            rec.advantage = g  # reward-to-go; baseline applied below
        returns.extend(rec.advantage for rec in records)
    flat = np.asarray(returns)
    mean = float(flat.mean())
    std = float(flat.std())
    if std < 1e-12:
        std = 1.0
    for records in episodes:
        for rec in records:
            rec.advantage = (rec.advantage - mean) / std


def surrogate_and_gradient(theta: np.ndarray, records: list[_StepRecord],
                           temperature: float, epsilon: float
                           ) -> tuple[float, np.ndarray]:
    """Mean clipped surrogate over the batch and its analytic gradient."""
    total = 0.0
    grad = np.zeros_like(theta)
    for rec in records:
        probs, log_probs = _softmax_logits(theta, rec.phi, temperature)
        ratio = math.exp(log_probs[rec.action] - rec.log_prob_old)
        total += clipped_surrogate(ratio, rec.advantage, epsilon)
        clipped_out = (rec.advantage > 0 and ratio > 1.0 + epsilon) or \
                      (rec.advantage < 0 and ratio < 1.0 - epsilon)
        if not clipped_out:
            dlogp = (rec.phi[rec.action] - probs @ rec.phi) / temperature
            grad += rec.advantage * ratio * dlogp
    n = len(records)
    return total / n, grad / n


def train_agent(env, params: PolicyParams, config: AgentConfig | None = None
                ) -> tuple[PolicyParams, list[LearningCurvePoint]]:
    """Batch policy-gradient training with the clipped-surrogate objective.

    Per iteration: collect a batch of episodes with the current policy,
    compute batch-normalized discounted reward-to-go advantages, then take
    a few gradient-ascent steps on the mean clipped surrogate.
    """
    config = config or AgentConfig()
    params = PolicyParams(theta=np.array(params.theta, dtype=np.float64))
    curve: list[LearningCurvePoint] = []
    for iteration in range(config.iterations):
        episodes = []
        returns = []
        # Per-episode streams: collection order cannot change the result.
        for episode in range(config.episodes_per_batch):
            rng = generator(config.seed, 5, iteration, episode)
            records, episode_return = _collect_episode(
                env, params, config.temperature, rng)
            if records:
                episodes.append(records)
                returns.append(episode_return)
        if not episodes:
            raise DivergenceDetected("no non-empty episodes collected")
        _assign_advantages(episodes, config.gamma)
        batch = [rec for records in episodes for rec in records]
        for _ in range(config.updates_per_batch):
            _, grad = surrogate_and_gradient(
                params.theta, batch, config.temperature, config.epsilon)
            params.theta = params.theta + config.learning_rate * grad
        if not np.isfinite(params.theta).all():
            raise DivergenceDetected("policy parameters became non-finite")
        arr = np.asarray(returns)
        curve.append(LearningCurvePoint(
            iteration=iteration,
            mean_return=float(arr.mean()),
            std_return=float(arr.std()),
        ))
    return params, curve
