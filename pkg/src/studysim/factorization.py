"""Online matrix factorization with dynamic user/exercise growth.

Predicted score for a (user, exercise) pair is the dot product of the
user's factor row and the exercise's factor column. New users and
exercises are appended mid-stream, initialized to the mean of the
existing rows/columns, and every observed interaction triggers a small
number of gradient-descent steps on that pair alone.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from studysim import _core
from studysim.errors import (
    DivergenceDetected,
    DuplicateExercise,
    DuplicateUser,
    SnapshotError,
    UnknownExercise,
    UnknownUser,
)
from studysim.events import EventLog, InteractionEvent
from studysim.persist import atomic_write_json, check_snapshot, load_json
from studysim.seeding import generator

SNAPSHOT_FORMAT = "studysim.factor_model"
SNAPSHOT_VERSION = 1


@dataclass
class Hyperparams:
    factors: int = 16
    reg_user: float = 0.01
    reg_exercise: float = 0.01
    learning_rate: float = 0.01
    steps_per_interaction: int = 5
    init_scale: float = 0.1

    def validate(self) -> None:
        if self.factors < 1:
            raise ValueError("factors must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.reg_user < 0 or self.reg_exercise < 0:
            raise ValueError("regularization weights must be non-negative")
        if self.steps_per_interaction < 1:
            raise ValueError("steps_per_interaction must be >= 1")
        if self.init_scale < 0:
            raise ValueError("init_scale must be non-negative")


class FactorModel:
    """Grows a user-factor matrix U (n x l) and exercise-factor matrix E (l x m)."""

    def __init__(self, hyper: Hyperparams | None = None, seed: int = 0):
        self.hyper = hyper or Hyperparams()
        self.hyper.validate()
        self.seed = seed
        width = self.hyper.factors
        self.U = np.zeros((0, width), dtype=np.float64)
        self.E = np.zeros((width, 0), dtype=np.float64)
        self.user_index: dict[str, int] = {}
        self.exercise_index: dict[str, int] = {}
        self._init_rng = generator(seed, 2)

    # -- lookups ---------------------------------------------------------

    @property
    def n_users(self) -> int:
        return self.U.shape[0]

    @property
    def n_exercises(self) -> int:
        return self.E.shape[1]

    def _user_row(self, user_id: str) -> int:
        try:
            return self.user_index[user_id]
        except KeyError:
            raise UnknownUser(user_id) from None

    def _exercise_col(self, exercise_id: str) -> int:
        try:
            return self.exercise_index[exercise_id]
        except KeyError:
            raise UnknownExercise(exercise_id) from None

    def user_vector(self, user_id: str) -> np.ndarray:
        return self.U[self._user_row(user_id)]

    def exercise_vector(self, exercise_id: str) -> np.ndarray:
        return self.E[:, self._exercise_col(exercise_id)]

    def mean_exercise_vector(self) -> np.ndarray:
        if self.n_exercises == 0:
            return np.zeros(self.hyper.factors)
        return self.E.mean(axis=1)

    # -- core operations ---------------------------------------------------

    def predict_score(self, user_id: str, exercise_id: str) -> float:
        """Raw dot product; deliberately not clamped to [0, 1]."""
        u = self._user_row(user_id)
        e = self._exercise_col(exercise_id)
        return float(self.U[u] @ self.E[:, e])

    def loss(self, observed: Iterable[tuple[str, str, float]]) -> float:
        """Squared reconstruction error plus squared-Frobenius regularization."""
        total = 0.0
        for user_id, exercise_id, score in observed:
            resid = score - self.predict_score(user_id, exercise_id)
            total += resid * resid
        total += self.hyper.reg_user * float(np.sum(self.U * self.U))
        total += self.hyper.reg_exercise * float(np.sum(self.E * self.E))
        return total

    def loss_gradient(self, observed: Iterable[tuple[str, str, float]]
                      ) -> tuple[np.ndarray, np.ndarray]:
        """Analytic gradient of loss() w.r.t. U and E (same shapes)."""
        dU = 2.0 * self.hyper.reg_user * self.U
        dE = 2.0 * self.hyper.reg_exercise * self.E
        for user_id, exercise_id, score in observed:
            u = self._user_row(user_id)
            e = self._exercise_col(exercise_id)
            resid = score - float(self.U[u] @ self.E[:, e])
            dU[u] += -2.0 * resid * self.E[:, e]
            dE[:, e] += -2.0 * resid * self.U[u]
        return dU, dE

    def add_user(self, user_id: str) -> None:
        """Append a row initialized to the average user (or noise if first)."""
        if user_id in self.user_index:
            raise DuplicateUser(user_id)
        if self.n_users > 0:
            row = self.U.mean(axis=0)
        else:
            row = self._init_rng.normal(0.0, self.hyper.init_scale, self.hyper.factors)
        self.user_index[user_id] = self.n_users
        self.U = np.vstack([self.U, row[None, :]])

    def add_exercise(self, exercise_id: str) -> None:
        """Column counterpart of add_user."""
        if exercise_id in self.exercise_index:
            raise DuplicateExercise(exercise_id)
        if self.n_exercises > 0:
            col = self.E.mean(axis=1)
        else:
            col = self._init_rng.normal(0.0, self.hyper.init_scale, self.hyper.factors)
        self.exercise_index[exercise_id] = self.n_exercises
        self.E = np.column_stack([self.E, col])

    def _steps(self, user_id: str, exercise_id: str, score: float, n_steps: int) -> None:
        u = self._user_row(user_id)
        e = self._exercise_col(exercise_id)
        _core.kernels().sgd_steps(
            self.U[u], self.E[:, e], float(score),
            self.hyper.learning_rate, self.hyper.reg_user,
            self.hyper.reg_exercise, n_steps,
        )
        if not (np.isfinite(self.U[u]).all() and np.isfinite(self.E[:, e]).all()):
            raise DivergenceDetected(
                f"non-finite factors after update on ({user_id}, {exercise_id}); "
                "lower the learning rate"
            )

    def grad_step(self, observation: tuple[str, str, float]) -> None:
        """One simultaneous gradient step on a single observation's loss."""
        user_id, exercise_id, score = observation
        self._steps(user_id, exercise_id, score, 1)

    def observe(self, event: InteractionEvent) -> None:
        """Grow the matrices for unseen ids, then train on the interaction."""
        if event.user_id not in self.user_index:
            self.add_user(event.user_id)
        if event.exercise_id not in self.exercise_index:
            self.add_exercise(event.exercise_id)
        self._steps(event.user_id, event.exercise_id, float(event.score),
                    self.hyper.steps_per_interaction)

    def batch_fit(self, log: EventLog, epochs: int) -> None:
        """Repeated grad_step passes over the log in chronological order."""
        for _ in range(epochs):
            for ev in log.events:
                self.grad_step((ev.user_id, ev.exercise_id, float(ev.score)))

    # -- persistence --------------------------------------------------------

    def to_snapshot(self) -> dict:
        users = sorted(self.user_index, key=self.user_index.get)
        exercises = sorted(self.exercise_index, key=self.exercise_index.get)
        return {
            "format": SNAPSHOT_FORMAT,
            "version": SNAPSHOT_VERSION,
            "hyper": asdict(self.hyper),
            "seed": self.seed,
            "users": users,
            "exercises": exercises,
            "user_factors": [[float(x) for x in row] for row in self.U],
            "exercise_factors": [[float(x) for x in row] for row in self.E],
        }

    def save(self, path) -> None:
        atomic_write_json(path, self.to_snapshot())

    @classmethod
    def from_snapshot(cls, doc: dict, path="<memory>") -> "FactorModel":
        check_snapshot(doc, SNAPSHOT_FORMAT, SNAPSHOT_VERSION, path)
        model = cls(Hyperparams(**doc["hyper"]), seed=int(doc["seed"]))
        width = model.hyper.factors
        model.user_index = {u: i for i, u in enumerate(doc["users"])}
        model.exercise_index = {e: i for i, e in enumerate(doc["exercises"])}
        model.U = np.asarray(doc["user_factors"], dtype=np.float64).reshape(
            len(model.user_index), width)
        model.E = np.asarray(doc["exercise_factors"], dtype=np.float64).reshape(
            width, len(model.exercise_index))
        if not (np.isfinite(model.U).all() and np.isfinite(model.E).all()):
            raise SnapshotError(f"{path}: non-finite factor values")
        return model

    @classmethod
    def load(cls, path) -> "FactorModel":
        return cls.from_snapshot(load_json(path), path)


def fit_from_stream(events: Sequence[InteractionEvent] | EventLog,
                    hyper: Hyperparams | None = None, seed: int = 0,
                    epochs: int = 0) -> FactorModel:
    """Stream every event through observe(), then optional batch epochs."""
    model = FactorModel(hyper, seed=seed)
    stream = events.events if isinstance(events, EventLog) else events
    for ev in stream:
        model.observe(ev)
    if epochs and isinstance(events, EventLog):
        model.batch_fit(events, epochs)
    elif epochs:
        for _ in range(epochs):
            for ev in stream:
                model.grad_step((ev.user_id, ev.exercise_id, float(ev.score)))
    return model
