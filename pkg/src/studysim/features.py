"""Windowed feature vectors for the success and dropout predictors.

Success layout: [user factors | (exercise factors, score) x n, oldest
first | candidate factors]. Dropout layout appends the candidate's
realized score. Histories shorter than the window are left-padded with
(mean exercise factors, 0.5).
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from studysim.factorization import FactorModel

PAD_SCORE = 0.5


def success_length(factors: int, window: int) -> int:
    return factors + window * (factors + 1) + factors


def dropout_length(factors: int, window: int) -> int:
    return success_length(factors, window) + 1


def assemble_success(user_vec: np.ndarray,
                     history_vecs: Sequence[np.ndarray],
                     history_scores: Sequence[float],
                     candidate_vec: np.ndarray,
                     window: int,
                     mean_vec: np.ndarray) -> np.ndarray:
    """Concatenate the layout from pre-resolved embedding vectors."""
    vecs = list(history_vecs)[-window:]
    scores = list(history_scores)[-window:]
    parts: list[np.ndarray] = [np.asarray(user_vec, dtype=np.float64)]
    for _ in range(window - len(vecs)):
        parts.append(mean_vec)
        parts.append(np.array([PAD_SCORE]))
    for vec, score in zip(vecs, scores):
        parts.append(np.asarray(vec, dtype=np.float64))
        parts.append(np.array([float(score)]))
    parts.append(np.asarray(candidate_vec, dtype=np.float64))
    return np.concatenate(parts)


def build_success_features(model: FactorModel, user_id: str,
                           history: Sequence[tuple[str, float]],
                           candidate: str, window: int) -> np.ndarray:
    user_vec = model.user_vector(user_id)
    vecs = [model.exercise_vector(ex) for ex, _ in history]
    scores = [s for _, s in history]
    return assemble_success(user_vec, vecs, scores,
                            model.exercise_vector(candidate), window,
                            model.mean_exercise_vector())


def build_dropout_features(model: FactorModel, user_id: str,
                           history: Sequence[tuple[str, float]],
                           candidate: str, window: int,
                           final_score: float) -> np.ndarray:
    base = build_success_features(model, user_id, history, candidate, window)
    return np.concatenate([base, [float(final_score)]])
