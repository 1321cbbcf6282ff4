"""Synthetic ground-truth worlds and interaction logs.

Gives every learned component an independent oracle: abilities and
difficulties are drawn from a standard normal, responses follow a
one-parameter logistic model, and dropout follows a logistic hazard in
consecutive failures and consecutive too-easy successes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from studysim.errors import InvalidCounts
from studysim.events import EventLog, InteractionEvent, _build_log
from studysim.persist import atomic_write_json, load_json
from studysim.seeding import generator, token_hash

EASY_SUCCESS_THRESHOLD = 0.9

# Per-user event spacing and per-user start offsets, in milliseconds.
STEP_MS = 60_000
USER_OFFSET_MS = 1_000

ORDER_RANDOM = "random"
ORDER_FIXED = "historical-fixed"


@dataclass
class SyntheticWorld:
    abilities: dict[str, float]
    difficulties: dict[str, float]
    workbooks: dict[str, list[str]] = field(default_factory=dict)
    dropout_coeffs: tuple[float, float, float] = (-6.0, 1.8, 0.5)
    rng_seed: int = 0

    @property
    def workbook_sizes(self) -> dict[str, int]:
        return {wb: len(exs) for wb, exs in self.workbooks.items()}

    def save(self, path) -> None:
        atomic_write_json(path, {
            "format": "studysim.world",
            "version": 1,
            "seed": self.rng_seed,
            "coefficients": {
                "intercept": self.dropout_coeffs[0],
                "per_consecutive_failure": self.dropout_coeffs[1],
                "per_consecutive_easy_success": self.dropout_coeffs[2],
            },
            "abilities": self.abilities,
            "difficulties": self.difficulties,
            "workbooks": self.workbooks,
        })

    @classmethod
    def load(cls, path) -> "SyntheticWorld":
        doc = load_json(path)
        coeffs = doc["coefficients"]
        return cls(
            abilities={k: float(v) for k, v in doc["abilities"].items()},
            difficulties={k: float(v) for k, v in doc["difficulties"].items()},
            workbooks={k: list(v) for k, v in doc["workbooks"].items()},
            dropout_coeffs=(
                float(coeffs["intercept"]),
                float(coeffs["per_consecutive_failure"]),
                float(coeffs["per_consecutive_easy_success"]),
            ),
            rng_seed=int(doc["seed"]),
        )


def _logistic(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def prob_correct(ability: float, difficulty: float) -> float:
    """One-parameter logistic response: P(correct) = sigma(ability - difficulty)."""
    return _logistic(ability - difficulty)


def prob_dropout(consec_failures: int, consec_easy_successes: int,
                 coeffs: tuple[float, float, float]) -> float:
    """Logistic hazard of quitting after the current submission.

    An "easy success" is a correct answer on an exercise whose true
    success probability exceeds 0.9; boredom and frustration both raise
    the hazard when their coefficients are positive.
    """
    b0, b1, b2 = coeffs
    return _logistic(b0 + b1 * consec_failures + b2 * consec_easy_successes)


def gen_world(n_users: int, n_exercises: int, n_workbooks: int,
              seed: int,
              dropout_coeffs: tuple[float, float, float] = (-6.0, 1.8, 0.5),
              ) -> SyntheticWorld:
    """Sample a ground-truth population; exercises go round-robin into workbooks."""
    if n_users <= 0 or n_exercises <= 0 or n_workbooks <= 0:
        raise InvalidCounts("all counts must be positive")
    if n_workbooks > n_exercises:
        raise InvalidCounts(
            f"cannot split {n_exercises} exercises into {n_workbooks} workbooks"
        )
    user_width = len(str(n_users - 1))
    ex_width = len(str(n_exercises - 1))
    wb_width = len(str(n_workbooks - 1))
    user_ids = [f"u{i:0{user_width}d}" for i in range(n_users)]
    exercise_ids = [f"e{j:0{ex_width}d}" for j in range(n_exercises)]

    rng = generator(seed, 0)
    abilities = dict(zip(user_ids, rng.standard_normal(n_users).tolist()))
    difficulties = dict(zip(exercise_ids, rng.standard_normal(n_exercises).tolist()))

    workbooks: dict[str, list[str]] = {f"wb{k:0{wb_width}d}": [] for k in range(n_workbooks)}
    wb_ids = sorted(workbooks)
    for j, ex in enumerate(exercise_ids):
        workbooks[wb_ids[j % n_workbooks]].append(ex)

    return SyntheticWorld(abilities=abilities, difficulties=difficulties,
                          workbooks=workbooks, dropout_coeffs=dropout_coeffs,
                          rng_seed=seed)


def _user_trajectory(world: SyntheticWorld, user_id: str, user_pos: int,
                     order_policy: str, max_events: int) -> list[InteractionEvent]:
    rng = generator(world.rng_seed, 1, token_hash(user_id))
    wb_ids = sorted(world.workbooks)
    wb = wb_ids[int(rng.integers(len(wb_ids)))]
    exercises = sorted(world.workbooks[wb])
    if order_policy == ORDER_RANDOM:
        order = [exercises[i] for i in rng.permutation(len(exercises))]
    elif order_policy == ORDER_FIXED:
        order = exercises
    else:
        raise ValueError(f"unknown exercise order policy {order_policy!r}")

    ability = world.abilities[user_id]
    events: list[InteractionEvent] = []
    consec_failures = 0
    consec_easy = 0
    for step, exercise_id in enumerate(order):
        if step >= max_events:
            break
        p = prob_correct(ability, world.difficulties[exercise_id])
        score = 1 if rng.random() < p else 0
        if score == 1:
            consec_failures = 0
            consec_easy = consec_easy + 1 if p > EASY_SUCCESS_THRESHOLD else 0
        else:
            consec_failures += 1
            consec_easy = 0
        events.append(InteractionEvent(
            user_id=user_id,
            exercise_id=exercise_id,
            workbook_id=wb,
            timestamp_ms=USER_OFFSET_MS * user_pos + STEP_MS * step,
            score=score,
        ))
        hazard = prob_dropout(consec_failures, consec_easy, world.dropout_coeffs)
        if rng.random() < hazard:
            break
    # Label by the observable rule: the final event is a dropout iff the
    # workbook was left unfinished (covers hazard exits and truncation).
    if events and len(events) < len(world.workbooks[wb]):
        events[-1] = InteractionEvent(
            user_id=user_id,
            exercise_id=events[-1].exercise_id,
            workbook_id=wb,
            timestamp_ms=events[-1].timestamp_ms,
            score=events[-1].score,
            dropout=1,
        )
    return events


def gen_log(world: SyntheticWorld, exercise_order_policy: str = ORDER_RANDOM,
            max_events_per_user: int = 100) -> EventLog:
    """Sample one trajectory per user and merge into a valid EventLog.

    Per-user RNG substreams (seed mixed with a hash of the user id) make
    each trajectory reproducible independent of generation order.
    """
    all_events: list[InteractionEvent] = []
    for pos, user_id in enumerate(sorted(world.abilities)):
        all_events.extend(_user_trajectory(
            world, user_id, pos, exercise_order_policy, max_events_per_user))
    return _build_log(all_events)
