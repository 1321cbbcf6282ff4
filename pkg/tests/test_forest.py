import itertools

import numpy as np
import pytest

from studysim.errors import EmptyDataset, LengthMismatch, RaggedFeatures
from studysim.forest import (
    TASK_CLASSIFICATION,
    TASK_REGRESSION,
    Forest,
    ForestConfig,
    fit_forest,
    predict_forest,
)


def exhaustive_best_split(X, y, min_samples_leaf=1):
    """Oracle: try every (feature, midpoint) split, minimize total SSE;
    ties by lowest feature index then lowest threshold."""
    best = None
    n, d = X.shape
    for f in range(d):
        values = np.unique(X[:, f])
        for lo, hi in zip(values, values[1:]):
            thr = (lo + hi) / 2
            mask = X[:, f] <= thr
            if mask.sum() < min_samples_leaf or (~mask).sum() < min_samples_leaf:
                continue
            sse = 0.0
            for part in (y[mask], y[~mask]):
                sse += float(np.sum((part - part.mean()) ** 2))
            key = (sse, f, thr)
            if best is None or key < best:
                best = key
    return best


class TestFitBasics:
    def test_single_sample_single_leaf(self):
        forest = fit_forest([[0.0]], [0.7], ForestConfig(n_trees=5, seed=1))
        assert predict_forest(forest, [123.0]) == 0.7
        assert all(t.n_nodes == 1 for t in forest.trees)

    def test_pure_class_probability_one(self):
        forest = fit_forest([[0.0], [1.0], [2.0]], [1, 1, 1],
                            ForestConfig(n_trees=3, seed=1),
                            task=TASK_CLASSIFICATION)
        assert predict_forest(forest, [0.5]) == 1.0

    def test_depth1_split_matches_exhaustive_oracle(self, backend):
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        y = np.array([0.0, 0.0, 1.0, 1.0])
        config = ForestConfig(n_trees=1, max_depth=1, min_samples_leaf=1,
                              features_per_split=1, seed=0, bootstrap=False)
        forest = fit_forest(X, y, config)
        tree = forest.trees[0]
        sse, f, thr = exhaustive_best_split(X, y)
        assert sse == 0.0
        assert tree.feature[0] == f == 0
        assert 1.0 < tree.threshold[0] < 2.0
        assert tree.threshold[0] == thr
        left_value = tree.value[tree.left[0]]
        right_value = tree.value[tree.right[0]]
        assert (left_value, right_value) == (0.0, 1.0)

    def test_full_tree_first_split_matches_oracle_on_random_data(self, backend):
        rng = np.random.default_rng(31)
        X = rng.normal(size=(40, 3))
        y = rng.normal(size=40)
        config = ForestConfig(n_trees=1, max_depth=1, min_samples_leaf=1,
                              features_per_split=3, seed=0, bootstrap=False)
        forest = fit_forest(X, y, config)
        tree = forest.trees[0]
        _, f, thr = exhaustive_best_split(X, y)
        assert tree.feature[0] == f
        assert tree.threshold[0] == pytest.approx(thr, abs=1e-12)

    def test_empty_and_ragged_rejected(self):
        with pytest.raises(EmptyDataset):
            fit_forest([], [], ForestConfig(n_trees=1))
        with pytest.raises(RaggedFeatures):
            fit_forest([[1.0, 2.0], [1.0]], [0.0, 1.0], ForestConfig(n_trees=1))

    def test_classification_requires_binary_targets(self):
        with pytest.raises(ValueError):
            fit_forest([[0.0], [1.0]], [0.3, 0.7], ForestConfig(n_trees=1),
                       task=TASK_CLASSIFICATION)


@pytest.fixture(scope="module")
def trained():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(200, 6))
    y = (X[:, 0] > 0).astype(float) * 0.8 + 0.1 * rng.random(200)
    return X, y, fit_forest(X, y, ForestConfig(n_trees=20, seed=5))


class TestPredict:

    def test_mean_of_constant_trees(self):
        forest = fit_forest([[0.0]], [0.7], ForestConfig(n_trees=4, seed=2))
        assert predict_forest(forest, [0.0]) == 0.7

    def test_mean_of_two_leaves(self):
        # two single-leaf trees predicting 0 and 1, assembled by hand
        t0 = fit_forest([[0.0]], [0.0], ForestConfig(n_trees=1, seed=0)).trees[0]
        t1 = fit_forest([[0.0]], [1.0], ForestConfig(n_trees=1, seed=0)).trees[0]
        forest = Forest(task=TASK_REGRESSION, n_features=1,
                        config=ForestConfig(n_trees=2), trees=[t0, t1])
        assert predict_forest(forest, [0.0]) == 0.5

    def test_length_mismatch(self, trained):
        _, _, forest = trained
        with pytest.raises(LengthMismatch):
            predict_forest(forest, np.zeros(7))

    def test_predictions_within_target_range(self, trained):
        X, y, forest = trained
        rng = np.random.default_rng(1)
        queries = rng.normal(size=(100, 6)) * 3
        preds = forest.predict(queries)
        assert preds.min() >= y.min() - 1e-12
        assert preds.max() <= y.max() + 1e-12

    def test_tree_order_permutation_invariance(self, trained):
        X, _, forest = trained
        shuffled = Forest(task=forest.task, n_features=forest.n_features,
                          config=forest.config,
                          trees=list(reversed(forest.trees)))
        a = forest.predict(X[:50])
        b = shuffled.predict(X[:50])
        assert np.abs(a - b).max() < 1e-12

    def test_classification_output_is_probability(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(120, 4))
        y = (X[:, 1] + 0.3 * rng.normal(size=120) > 0).astype(float)
        forest = fit_forest(X, y, ForestConfig(n_trees=15, seed=3),
                            task=TASK_CLASSIFICATION)
        preds = forest.predict(rng.normal(size=(60, 4)))
        assert np.all(preds >= 0.0) and np.all(preds <= 1.0)

    def test_threshold_strictly_between_observed_values(self):
        rng = np.random.default_rng(10)
        X = np.round(rng.normal(size=(80, 3)), 1)  # heavy ties
        y = rng.normal(size=80)
        forest = fit_forest(X, y, ForestConfig(n_trees=5, seed=6, bootstrap=False))
        for tree in forest.trees:
            for node in range(tree.n_nodes):
                f = tree.feature[node]
                if f < 0:
                    continue
                thr = tree.threshold[node]
                col = X[:, f]
                assert col.min() < thr < col.max()
                below = col[col < thr]
                above = col[col > thr]
                assert below.size and above.size
                assert below.max() < thr < above.min()


class TestDeterminismAndSnapshots:
    def test_same_seed_same_forest(self, backend):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(90, 5))
        y = rng.normal(size=90)
        a = fit_forest(X, y, ForestConfig(n_trees=8, seed=4))
        b = fit_forest(X, y, ForestConfig(n_trees=8, seed=4))
        for ta, tb in zip(a.trees, b.trees):
            assert np.array_equal(ta.feature, tb.feature)
            assert np.array_equal(ta.threshold, tb.threshold)
            assert np.array_equal(ta.value, tb.value)

    def test_snapshot_round_trip_predictions(self, tmp_path):
        rng = np.random.default_rng(14)
        X = rng.normal(size=(100, 4))
        y = (X[:, 0] > 0.2).astype(float)
        forest = fit_forest(X, y, ForestConfig(n_trees=10, seed=9),
                            task=TASK_CLASSIFICATION)
        path = tmp_path / "forest.json"
        forest.save(path)
        loaded = Forest.load(path)
        queries = rng.normal(size=(200, 4))
        assert np.abs(forest.predict(queries) - loaded.predict(queries)).max() < 1e-12

    def test_snapshot_version_rejected(self, tmp_path):
        import json
        from studysim.errors import SnapshotError
        forest = fit_forest([[0.0]], [0.5], ForestConfig(n_trees=1))
        path = tmp_path / "forest.json"
        forest.save(path)
        doc = json.loads(path.read_text())
        doc["version"] = 2
        path.write_text(json.dumps(doc))
        with pytest.raises(SnapshotError):
            Forest.load(path)


def test_gini_split_matches_exhaustive_oracle(backend):
    # classification oracle: minimize weighted Gini over all splits
    rng = np.random.default_rng(17)
    X = rng.normal(size=(30, 2))
    y = (X[:, 0] + 0.5 * rng.normal(size=30) > 0).astype(float)

    def gini(part):
        if len(part) == 0:
            return 0.0
        p = part.mean()
        return 1 - p * p - (1 - p) * (1 - p)

    best = None
    for f, (lo, hi) in itertools.chain.from_iterable(
            ((f, pair) for pair in zip(np.unique(X[:, f]), np.unique(X[:, f])[1:]))
            for f in range(2)):
        thr = (lo + hi) / 2
        mask = X[:, f] <= thr
        if not mask.any() or mask.all():
            continue
        score = mask.sum() * gini(y[mask]) + (~mask).sum() * gini(y[~mask])
        key = (score, f, thr)
        if best is None or key < best:
            best = key

    config = ForestConfig(n_trees=1, max_depth=1, min_samples_leaf=1,
                          features_per_split=2, seed=0, bootstrap=False)
    forest = fit_forest(X, y, config, task=TASK_CLASSIFICATION)
    tree = forest.trees[0]
    assert tree.feature[0] == best[1]
    assert tree.threshold[0] == pytest.approx(best[2], abs=1e-12)
