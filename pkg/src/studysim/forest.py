"""Bagged CART forests: regression for success scores, classification
(leaf = class fraction, so the output is a probability) for dropout.

Each tree is grown on a bootstrap resample with per-node feature
subsampling; all randomness derives from mix(master_seed, tree_index),
so fitting is reproducible regardless of scheduling.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from studysim import _core
from studysim.errors import EmptyDataset, LengthMismatch, RaggedFeatures
from studysim.persist import atomic_write_json, check_snapshot, load_json
from studysim.seeding import mix_seed, uniform_indices

SNAPSHOT_FORMAT = "studysim.forest"
SNAPSHOT_VERSION = 1

TASK_REGRESSION = "regression"
TASK_CLASSIFICATION = "classification"

_TASK_CODES = {TASK_REGRESSION: 0, TASK_CLASSIFICATION: 1}

_BOOTSTRAP_STREAM = 0xB005


@dataclass
class ForestConfig:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 2
    features_per_split: int | None = None  # None: ceil(sqrt(d)) cls, ceil(d/3) reg
    seed: int = 0
    bootstrap: bool = True

    def resolve_features_per_split(self, n_features: int, task: str) -> int:
        if self.features_per_split is not None:
            return max(1, min(self.features_per_split, n_features))
        if task == TASK_CLASSIFICATION:
            return max(1, math.isqrt(n_features - 1) + 1 if n_features > 1 else 1)
        return max(1, -(-n_features // 3))


@dataclass
class Tree:
    """Flat node arrays; feature -1 marks a leaf, children are -1 there."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)


@dataclass
class Forest:
    task: str
    n_features: int
    config: ForestConfig
    trees: list[Tree] = field(default_factory=list)
    _packed: tuple | None = None

    def _pack(self):
        if self._packed is None:
            offsets = np.cumsum([0] + [t.n_nodes for t in self.trees])
            feature = np.concatenate([t.feature for t in self.trees])
            threshold = np.concatenate([t.threshold for t in self.trees])
            internal = feature >= 0
            left = np.concatenate([t.left + off for t, off in zip(self.trees, offsets)])
            right = np.concatenate([t.right + off for t, off in zip(self.trees, offsets)])
            left = np.where(internal, left, -1).astype(np.int32)
            right = np.where(internal, right, -1).astype(np.int32)
            value = np.concatenate([t.value for t in self.trees])
            roots = offsets[:-1].astype(np.int64)
            self._packed = (feature.astype(np.int32), threshold, left, right,
                            value, roots)
        return self._packed

    def predict(self, features) -> float | np.ndarray:
        """Mean of per-tree predictions; accepts one vector or a matrix."""
        X = np.asarray(features, dtype=np.float64)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise LengthMismatch(
                f"expected {self.n_features} features, got {X.shape[1]}"
            )
        packed = self._pack()
        out = _core.kernels().forest_predict(*packed, np.ascontiguousarray(X))
        return float(out[0]) if single else out

    def save(self, path) -> None:
        atomic_write_json(path, self.to_snapshot())

    def to_snapshot(self) -> dict:
        return {
            "format": SNAPSHOT_FORMAT,
            "version": SNAPSHOT_VERSION,
            "task": self.task,
            "n_features": self.n_features,
            "config": asdict(self.config),
            "trees": [
                {
                    "feature": t.feature.tolist(),
                    "threshold": [float(x) for x in t.threshold],
                    "left": t.left.tolist(),
                    "right": t.right.tolist(),
                    "value": [float(x) for x in t.value],
                }
                for t in self.trees
            ],
        }

    @classmethod
    def from_snapshot(cls, doc: dict, path="<memory>") -> "Forest":
        check_snapshot(doc, SNAPSHOT_FORMAT, SNAPSHOT_VERSION, path)
        config = ForestConfig(**doc["config"])
        trees = [
            Tree(
                feature=np.asarray(t["feature"], dtype=np.int32),
                threshold=np.asarray(t["threshold"], dtype=np.float64),
                left=np.asarray(t["left"], dtype=np.int32),
                right=np.asarray(t["right"], dtype=np.int32),
                value=np.asarray(t["value"], dtype=np.float64),
            )
            for t in doc["trees"]
        ]
        return cls(task=doc["task"], n_features=int(doc["n_features"]),
                   config=config, trees=trees)

    @classmethod
    def load(cls, path) -> "Forest":
        return cls.from_snapshot(load_json(path), path)


def _validate_dataset(features, targets, task: str) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(features, np.ndarray) and features.ndim == 2:
        X = np.ascontiguousarray(features, dtype=np.float64)
    else:
        rows = [np.asarray(row, dtype=np.float64) for row in features]
        if not rows:
            raise EmptyDataset("no samples")
        lengths = {row.shape[-1] for row in rows}
        if len(lengths) != 1 or any(row.ndim != 1 for row in rows):
            raise RaggedFeatures(f"feature lengths differ: {sorted(lengths)}")
        X = np.ascontiguousarray(np.stack(rows))
    y = np.asarray(targets, dtype=np.float64)
    if X.shape[0] == 0:
        raise EmptyDataset("no samples")
    if y.shape != (X.shape[0],):
        raise LengthMismatch(f"{X.shape[0]} feature rows but {y.shape} targets")
    if not np.isfinite(X).all() or not np.isfinite(y).all():
        raise ValueError("features and targets must be finite")
    if task == TASK_CLASSIFICATION and not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("classification targets must be binary 0/1")
    return X, y


def fit_forest(features, targets, config: ForestConfig | None = None,
               task: str = TASK_REGRESSION) -> Forest:
    if task not in _TASK_CODES:
        raise ValueError(f"unknown task {task!r}")
    config = config or ForestConfig()
    X, y = _validate_dataset(features, targets, task)
    n, d = X.shape
    fps = config.resolve_features_per_split(d, task)
    max_depth = -1 if config.max_depth is None else config.max_depth
    kern = _core.kernels()
    trees = []
    for i in range(config.n_trees):
        tree_seed = mix_seed(config.seed, i)
        if config.bootstrap:
            indices = uniform_indices(mix_seed(tree_seed, _BOOTSTRAP_STREAM), n, n)
        else:
            indices = np.arange(n, dtype=np.int64)
        arrays = kern.grow_tree(X, y, _TASK_CODES[task], max_depth,
                                config.min_samples_leaf, fps, tree_seed, indices)
        trees.append(Tree(*arrays))
    return Forest(task=task, n_features=d, config=config, trees=trees)


def predict_forest(forest: Forest, features) -> float | np.ndarray:
    return forest.predict(features)
