"""Dataset assembly and evaluation for the success/dropout predictors.

Success samples use each event's prior same-user events as the history
window and the event's observed binary score as the target. Dropout
samples append the observed score and take the derived dropout label as
the class. Splits are chronological to avoid look-ahead leakage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from studysim.errors import InsufficientData, SingleClass
from studysim.events import EventLog
from studysim.factorization import FactorModel
from studysim.features import assemble_success
from studysim.forest import TASK_CLASSIFICATION, TASK_REGRESSION, Forest, ForestConfig, fit_forest
from studysim.metrics import rmse, roc_auc
from studysim.seeding import generator


@dataclass
class MetricRow:
    model: str
    window: int
    metric: str
    value: float

    def as_csv_row(self):
        return (self.model, self.window, self.metric, self.value)


def _embedded_history(model: FactorModel, events) -> tuple[list, list]:
    vecs = [model.exercise_vector(ev.exercise_id) for ev in events]
    scores = [float(ev.score) for ev in events]
    return vecs, scores


def build_success_dataset(log: EventLog, model: FactorModel, window: int
                          ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (features, targets, global positions) ordered chronologically."""
    mean_vec = model.mean_exercise_vector()
    rows, targets, positions = [], [], []
    for user_id, user_positions in log.user_index.items():
        user_vec = model.user_vector(user_id)
        events = [log.events[p] for p in user_positions]
        vecs, scores = _embedded_history(model, events)
        for j, ev in enumerate(events):
            rows.append(assemble_success(
                user_vec, vecs[max(0, j - window):j], scores[max(0, j - window):j],
                vecs[j], window, mean_vec))
            targets.append(float(ev.score))
            positions.append(user_positions[j])
    if not rows:
        raise InsufficientData("empty log")
    order = np.argsort(np.asarray(positions), kind="stable")
    X = np.stack(rows)[order]
    y = np.asarray(targets, dtype=np.float64)[order]
    return X, y, np.asarray(positions)[order]


def build_dropout_dataset(log: EventLog, model: FactorModel, window: int
                          ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Success features plus the realized score; labels are dropout flags."""
    X, scores, positions = build_success_dataset(log, model, window)
    X = np.column_stack([X, scores])
    labels = np.asarray([log.events[p].dropout for p in positions], dtype=np.float64)
    return X, labels, positions


def upsample_minority(features, labels, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Duplicate minority-class samples (with replacement) until classes balance."""
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y == 0)
    if len(pos) == 0 or len(neg) == 0:
        raise SingleClass("cannot balance a single-class dataset")
    if len(pos) == len(neg):
        return X, y
    minority = pos if len(pos) < len(neg) else neg
    deficit = abs(len(pos) - len(neg))
    rng = generator(seed, 3)
    extra = minority[rng.integers(0, len(minority), deficit)]
    return np.vstack([X, X[extra]]), np.concatenate([y, y[extra]])


def per_user_chronological_split(log: EventLog, ratio: float = 0.8) -> np.ndarray:
    """Boolean mask over global positions: True = training (first 80% per user)."""
    train = np.zeros(len(log.events), dtype=bool)
    for positions in log.user_index.values():
        cut = max(1, int(len(positions) * ratio))
        for p in positions[:cut]:
            train[p] = True
    return train


def global_chronological_split(log: EventLog, ratio: float = 0.8) -> np.ndarray:
    """True = training (earliest 80% of all events)."""
    train = np.zeros(len(log.events), dtype=bool)
    train[: max(1, int(len(log.events) * ratio))] = True
    return train


def evaluate_table1(log: EventLog, model: FactorModel,
                    window_sizes=(3, 10),
                    forest_config: ForestConfig | None = None) -> list[MetricRow]:
    """Held-out success RMSE per window size, with a global-mean baseline row.

    Per-user chronological 80/20 split; the same split serves all windows.
    """
    if len(log.user_index) < 2:
        raise InsufficientData("need at least 2 users")
    forest_config = forest_config or ForestConfig()
    rows: list[MetricRow] = []
    baseline_done = False
    for window in window_sizes:
        X, y, positions = build_success_dataset(log, model, window)
        train_mask = per_user_chronological_split(log)[positions]
        if not train_mask.any() or train_mask.all():
            raise InsufficientData("split produced an empty train or test side")
        forest = fit_forest(X[train_mask], y[train_mask], forest_config,
                            task=TASK_REGRESSION)
        preds = forest.predict(X[~train_mask])
        rows.append(MetricRow("random_forest", window, "rmse",
                              rmse(preds, y[~train_mask])))
        if not baseline_done:
            mean_pred = float(np.mean(y[train_mask]))
            rows.append(MetricRow("global_mean", 0, "rmse",
                                  rmse(np.full((~train_mask).sum(), mean_pred),
                                       y[~train_mask])))
            baseline_done = True
    return rows


@dataclass
class DropoutEvaluation:
    forest: Forest
    auc: float
    curve: list[tuple[float, float]]
    n_train: int
    n_test: int


def evaluate_dropout(log: EventLog, model: FactorModel, window: int,
                     forest_config: ForestConfig | None = None,
                     seed: int = 0) -> DropoutEvaluation:
    """Global-chronological 80/20 split, minority upsampling on train only.

    The split is global (not per user) because dropout labels sit on each
    user's final event; a per-user chronological split would push every
    positive into the test side.
    """
    forest_config = forest_config or ForestConfig()
    X, y, positions = build_dropout_dataset(log, model, window)
    train_mask = global_chronological_split(log)[positions]
    X_train, y_train = X[train_mask], y[train_mask]
    X_test, y_test = X[~train_mask], y[~train_mask]
    if len(y_test) == 0 or len(y_train) == 0:
        raise InsufficientData("split produced an empty train or test side")
    X_bal, y_bal = upsample_minority(X_train, y_train, seed)
    forest = fit_forest(X_bal, y_bal, forest_config, task=TASK_CLASSIFICATION)
    curve, auc = roc_auc(forest.predict(X_test), y_test.astype(int))
    return DropoutEvaluation(forest=forest, auc=auc, curve=curve,
                             n_train=len(y_train), n_test=len(y_test))
