"""Pure-Python/numpy fallback for the compiled kernels.

Every function here mirrors its counterpart in ``_kernels.pyx`` operation
for operation: same accumulation order, same tie-breaking, same RNG
stream. The two backends must produce bit-identical trees and factor
updates; tests/test_backends.py enforces that.
"""

from __future__ import annotations

import numpy as np

from studysim.seeding import mix_seed, mix64, splitmix_at  # noqa: F401  (re-exported)

TASK_REGRESSION = 0
TASK_CLASSIFICATION = 1


def sample_features(seed: int, n_features: int, k: int) -> np.ndarray:
    """k distinct feature indices from [0, n_features), sorted ascending.

    Partial Fisher-Yates driven by the SplitMix64 stream at ``seed``.
    """
    pool = list(range(n_features))
    for i in range(k):
        r = splitmix_at(seed, i)
        j = i + r % (n_features - i)
        pool[i], pool[j] = pool[j], pool[i]
    chosen = pool[:k]
    chosen.sort()
    return np.asarray(chosen, dtype=np.int64)


def sgd_steps(u, e, score, learning_rate, reg_user, reg_exercise, n_steps):
    """In-place gradient-descent steps on one (user row, exercise column) pair.

    Simultaneous update: both gradients use the pre-update values of the
    step. Plain scalar loop so results match the compiled kernel bitwise.
    """
    width = u.shape[0]
    for _ in range(n_steps):
        pred = 0.0
        for f in range(width):
            pred += u[f] * e[f]
        resid = score - pred
        for f in range(width):
            uf = u[f]
            ef = e[f]
            gu = -2.0 * resid * ef + 2.0 * reg_user * uf
            ge = -2.0 * resid * uf + 2.0 * reg_exercise * ef
            u[f] = uf - learning_rate * gu
            e[f] = ef - learning_rate * ge


def grow_tree(X, y, task, max_depth, min_samples_leaf, features_per_split,
              tree_seed, sample_indices):
    """Grow one CART tree; returns flat (feature, threshold, left, right, value).

    feature = -1 marks a leaf. Splits minimize SSE (regression) or weighted
    Gini (classification); ties resolved by lowest feature index then lowest
    threshold; thresholds at midpoints of consecutive distinct values.
    """
    n = int(sample_indices.shape[0])
    d = int(X.shape[1])
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int32)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int32)
    right = np.full(cap, -1, dtype=np.int32)
    value = np.zeros(cap, dtype=np.float64)
    samples = np.array(sample_indices, dtype=np.int64)
    msl = int(min_samples_leaf)

    stack = [(0, 0, n, 0)]
    next_id = 1
    while stack:
        nid, lo, hi, depth = stack.pop()
        idx = samples[lo:hi]
        k = hi - lo
        t = y[idx]
        value[nid] = np.cumsum(t)[-1] / k
        if k < 2 * msl or (0 <= max_depth <= depth) or t.min() == t.max():
            continue

        if features_per_split >= d:
            chosen = np.arange(d, dtype=np.int64)
        else:
            chosen = sample_features(mix_seed(tree_seed, nid), d, features_per_split)

        best_score = np.inf
        best_feature = -1
        best_threshold = 0.0
        pos = np.arange(msl - 1, k - msl)
        for f in chosen:
            v = X[idx, f]
            order = np.argsort(v, kind="stable")
            vs = v[order]
            ts = t[order]
            a = vs[pos]
            b = vs[pos + 1]
            mid = (a + b) * 0.5
            ok = (a < mid) & (mid < b)
            if not ok.any():
                continue
            cs = np.cumsum(ts)
            total = cs[-1]
            kl = (pos + 1).astype(np.float64)
            kr = (k - pos - 1).astype(np.float64)
            sl = cs[pos]
            sr = total - sl
            if task == TASK_REGRESSION:
                qs = np.cumsum(ts * ts)
                qtotal = qs[-1]
                ql = qs[pos]
                qr = qtotal - ql
                score = (ql - (sl * sl) / kl) + (qr - (sr * sr) / kr)
            else:
                pl = sl / kl
                pr = sr / kr
                score = kl * (1.0 - pl * pl - (1.0 - pl) * (1.0 - pl)) \
                    + kr * (1.0 - pr * pr - (1.0 - pr) * (1.0 - pr))
            score = np.where(ok, score, np.inf)
            best = int(np.argmin(score))
            if score[best] < best_score:
                best_score = float(score[best])
                best_feature = int(f)
                best_threshold = float(mid[best])

        if best_feature < 0:
            continue
        mask = X[idx, best_feature] <= best_threshold
        n_left = int(np.count_nonzero(mask))
        left_part = idx[mask]
        right_part = idx[~mask]  # idx views samples; gather both before writing
        samples[lo:lo + n_left] = left_part
        samples[lo + n_left:hi] = right_part
        feature[nid] = best_feature
        threshold[nid] = best_threshold
        left[nid] = next_id
        right[nid] = next_id + 1
        stack.append((next_id + 1, lo + n_left, hi, depth + 1))
        stack.append((next_id, lo, lo + n_left, depth + 1))
        next_id += 2

    return (feature[:next_id].copy(), threshold[:next_id].copy(),
            left[:next_id].copy(), right[:next_id].copy(), value[:next_id].copy())


def forest_predict(feature, threshold, left, right, value, roots, X):
    """Mean of per-tree predictions, accumulated in tree order."""
    n = X.shape[0]
    acc = np.zeros(n, dtype=np.float64)
    rows = np.arange(n)
    for root in roots:
        node = np.full(n, root, dtype=np.int64)
        active = feature[node] >= 0
        while active.any():
            sel = rows[active]
            cur = node[active]
            f = feature[cur]
            go_left = X[sel, f] <= threshold[cur]
            node[active] = np.where(go_left, left[cur], right[cur])
            active = feature[node] >= 0
        acc += value[node]
    return acc / len(roots)
