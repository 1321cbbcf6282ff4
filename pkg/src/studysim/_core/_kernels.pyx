# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: CART tree growth, forest traversal, MF gradient steps.

Mirrors pykernels.py operation for operation; both backends must produce
bit-identical results (same accumulation order, same RNG stream, same
tie-breaking). Change one side only together with the other.
"""

import numpy as np

from libc.stdint cimport int32_t, int64_t, uint64_t

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15UL
cdef uint64_t MIX1 = 0xBF58476D1CE4E5B9UL
cdef uint64_t MIX2 = 0x94D049BB133111EBUL
cdef uint64_t COMB = 0xC2B2AE3D27D4EB4FUL

cdef int TASK_REGRESSION_C = 0


cdef inline uint64_t _mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * MIX1
    z = (z ^ (z >> 27)) * MIX2
    return z ^ (z >> 31)


cdef inline uint64_t _splitmix_at(uint64_t seed, uint64_t index) nogil:
    return _mix64(seed + (index + 1) * GOLDEN)


cdef inline uint64_t _mix_seed(uint64_t a, uint64_t b) nogil:
    return _mix64(a * GOLDEN + b * COMB + 1)


def mix64(seed):
    return int(_mix64(<uint64_t> (seed & 0xFFFFFFFFFFFFFFFF)))


def splitmix_at(seed, index):
    return int(_splitmix_at(<uint64_t> (seed & 0xFFFFFFFFFFFFFFFF), <uint64_t> index))


def mix_seed(a, b):
    return int(_mix_seed(<uint64_t> (a & 0xFFFFFFFFFFFFFFFF),
                         <uint64_t> (b & 0xFFFFFFFFFFFFFFFF)))


cdef void _sample_features_c(uint64_t seed, int64_t n_features, int64_t k,
                             int64_t* pool) nogil:
    # Partial Fisher-Yates over pool[0:n_features]; caller sorts pool[0:k].
    cdef int64_t i, j, tmp
    cdef uint64_t r
    for i in range(n_features):
        pool[i] = i
    for i in range(k):
        r = _splitmix_at(seed, <uint64_t> i)
        j = i + <int64_t> (r % <uint64_t> (n_features - i))
        tmp = pool[i]
        pool[i] = pool[j]
        pool[j] = tmp


cdef void _isort(int64_t* a, int64_t k) nogil:
    cdef int64_t i, j, key
    for i in range(1, k):
        key = a[i]
        j = i - 1
        while j >= 0 and a[j] > key:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = key


def sample_features(seed, n_features, k):
    """k distinct feature indices, sorted ascending; same stream as pykernels."""
    pool_arr = np.empty(int(n_features), dtype=np.int64)
    cdef int64_t[::1] pool = pool_arr
    _sample_features_c(<uint64_t> (seed & 0xFFFFFFFFFFFFFFFF),
                       <int64_t> n_features, <int64_t> k, &pool[0])
    _isort(&pool[0], <int64_t> k)
    return pool_arr[:int(k)].copy()


def sgd_steps(double[:] u, double[:] e, double score, double learning_rate,
              double reg_user, double reg_exercise, int n_steps):
    """In-place simultaneous gradient steps on one user row / exercise column."""
    cdef Py_ssize_t width = u.shape[0]
    cdef Py_ssize_t f
    cdef int step
    cdef double pred, resid, uf, ef, gu, ge
    for step in range(n_steps):
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


cdef void _stable_argsort(double* keys, int64_t* idx, int64_t* tmp,
                          int64_t k) nogil:
    # Bottom-up stable mergesort of idx (positions into keys) by key value.
    cdef int64_t width = 1
    cdef int64_t lo, mid, hi, a, b, o, i
    cdef int64_t* src = idx
    cdef int64_t* dst = tmp
    cdef int64_t* swap
    while width < k:
        lo = 0
        while lo < k:
            mid = lo + width
            if mid > k:
                mid = k
            hi = lo + 2 * width
            if hi > k:
                hi = k
            a = lo
            b = mid
            o = lo
            while a < mid and b < hi:
                if keys[src[b]] < keys[src[a]]:
                    dst[o] = src[b]
                    b += 1
                else:
                    dst[o] = src[a]
                    a += 1
                o += 1
            while a < mid:
                dst[o] = src[a]
                a += 1
                o += 1
            while b < hi:
                dst[o] = src[b]
                b += 1
                o += 1
            lo = hi
        swap = src
        src = dst
        dst = swap
        width *= 2
    if src != idx:
        for i in range(k):
            idx[i] = src[i]


def grow_tree(double[:, ::1] X, double[:] y, int task, int max_depth,
              int min_samples_leaf, int features_per_split, tree_seed,
              int64_t[:] sample_indices):
    """Grow one CART tree; see pykernels.grow_tree for the contract."""
    cdef int64_t n = sample_indices.shape[0]
    cdef int64_t d = X.shape[1]
    cdef int64_t cap = 2 * n + 1
    cdef uint64_t tseed = <uint64_t> (tree_seed & 0xFFFFFFFFFFFFFFFF)

    feature_arr = np.full(cap, -1, dtype=np.int32)
    threshold_arr = np.zeros(cap, dtype=np.float64)
    left_arr = np.full(cap, -1, dtype=np.int32)
    right_arr = np.full(cap, -1, dtype=np.int32)
    value_arr = np.zeros(cap, dtype=np.float64)
    cdef int32_t[::1] feature = feature_arr
    cdef double[::1] threshold = threshold_arr
    cdef int32_t[::1] left = left_arr
    cdef int32_t[::1] right = right_arr
    cdef double[::1] value = value_arr

    samples_arr = np.array(sample_indices, dtype=np.int64)
    cdef int64_t[::1] samples = samples_arr
    part_arr = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] part = part_arr
    v_arr = np.empty(n, dtype=np.float64)
    t_arr = np.empty(n, dtype=np.float64)
    cs_arr = np.empty(n, dtype=np.float64)
    qs_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] v = v_arr
    cdef double[::1] t = t_arr
    cdef double[::1] cs = cs_arr
    cdef double[::1] qs = qs_arr
    order_arr = np.empty(n, dtype=np.int64)
    tmp_arr = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] order = order_arr
    cdef int64_t[::1] tmp = tmp_arr
    vs_arr = np.empty(n, dtype=np.float64)
    ts_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] vs = vs_arr
    cdef double[::1] ts = ts_arr
    pool_arr = np.empty(d, dtype=np.int64)
    cdef int64_t[::1] pool = pool_arr

    # DFS stack; never deeper than the node count.
    stack_nid_arr = np.empty(cap, dtype=np.int64)
    stack_lo_arr = np.empty(cap, dtype=np.int64)
    stack_hi_arr = np.empty(cap, dtype=np.int64)
    stack_depth_arr = np.empty(cap, dtype=np.int64)
    cdef int64_t[::1] stack_nid = stack_nid_arr
    cdef int64_t[::1] stack_lo = stack_lo_arr
    cdef int64_t[::1] stack_hi = stack_hi_arr
    cdef int64_t[::1] stack_depth = stack_depth_arr

    cdef int64_t top = 0
    cdef int64_t next_id = 1
    cdef int64_t nid, lo, hi, depth, k, i, f, fi, n_chosen, n_left, n_placed
    cdef int64_t row
    cdef double tsum, tmin, tmax, running, xa, xb, midv
    cdef double total, qtotal, kl, kr, sl, sr, ql, qr, pl, pr, sc
    cdef double best_score, best_threshold, feat_best_score, feat_best_threshold
    cdef int64_t best_feature, feat_best_pos
    cdef uint64_t node_seed
    cdef int msl = min_samples_leaf

    stack_nid[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = n
    stack_depth[0] = 0
    top = 1

    while top > 0:
        top -= 1
        nid = stack_nid[top]
        lo = stack_lo[top]
        hi = stack_hi[top]
        depth = stack_depth[top]
        k = hi - lo

        tsum = 0.0
        tmin = y[samples[lo]]
        tmax = tmin
        for i in range(k):
            running = y[samples[lo + i]]
            t[i] = running
            tsum += running
            if running < tmin:
                tmin = running
            if running > tmax:
                tmax = running
        value[nid] = tsum / k

        if k < 2 * msl or (0 <= max_depth <= depth) or tmin == tmax:
            continue

        if features_per_split >= d:
            n_chosen = d
            for i in range(d):
                pool[i] = i
        else:
            n_chosen = features_per_split
            node_seed = _mix_seed(tseed, <uint64_t> nid)
            _sample_features_c(node_seed, d, n_chosen, &pool[0])
            _isort(&pool[0], n_chosen)

        best_score = np.inf
        best_feature = -1
        best_threshold = 0.0

        for fi in range(n_chosen):
            f = pool[fi]
            for i in range(k):
                row = samples[lo + i]
                v[i] = X[row, f]
                t[i] = y[row]
                order[i] = i
            _stable_argsort(&v[0], &order[0], &tmp[0], k)
            for i in range(k):
                vs[i] = v[order[i]]
                ts[i] = t[order[i]]
            running = 0.0
            for i in range(k):
                running += ts[i]
                cs[i] = running
            total = cs[k - 1]
            if task == TASK_REGRESSION_C:
                running = 0.0
                for i in range(k):
                    running += ts[i] * ts[i]
                    qs[i] = running
                qtotal = qs[k - 1]

            feat_best_score = np.inf
            feat_best_threshold = 0.0
            feat_best_pos = -1
            for i in range(msl - 1, k - msl):
                xa = vs[i]
                xb = vs[i + 1]
                midv = (xa + xb) * 0.5
                if not (xa < midv and midv < xb):
                    continue
                kl = <double> (i + 1)
                kr = <double> (k - i - 1)
                sl = cs[i]
                sr = total - sl
                if task == TASK_REGRESSION_C:
                    ql = qs[i]
                    qr = qtotal - ql
                    sc = (ql - (sl * sl) / kl) + (qr - (sr * sr) / kr)
                else:
                    pl = sl / kl
                    pr = sr / kr
                    sc = kl * (1.0 - pl * pl - (1.0 - pl) * (1.0 - pl)) \
                        + kr * (1.0 - pr * pr - (1.0 - pr) * (1.0 - pr))
                if sc < feat_best_score:
                    feat_best_score = sc
                    feat_best_threshold = midv
                    feat_best_pos = i
            if feat_best_pos >= 0 and feat_best_score < best_score:
                best_score = feat_best_score
                best_feature = f
                best_threshold = feat_best_threshold

        if best_feature < 0:
            continue

        # stable two-pass partition: order within each side is preserved
        n_left = 0
        n_placed = 0
        for i in range(k):
            row = samples[lo + i]
            if X[row, best_feature] <= best_threshold:
                part[n_left] = row
                n_left += 1
        n_placed = n_left
        for i in range(k):
            row = samples[lo + i]
            if not (X[row, best_feature] <= best_threshold):
                part[n_placed] = row
                n_placed += 1
        for i in range(k):
            samples[lo + i] = part[i]

        feature[nid] = <int32_t> best_feature
        threshold[nid] = best_threshold
        left[nid] = <int32_t> next_id
        right[nid] = <int32_t> (next_id + 1)
        stack_nid[top] = next_id + 1
        stack_lo[top] = lo + n_left
        stack_hi[top] = hi
        stack_depth[top] = depth + 1
        top += 1
        stack_nid[top] = next_id
        stack_lo[top] = lo
        stack_hi[top] = lo + n_left
        stack_depth[top] = depth + 1
        top += 1
        next_id += 2

    return (feature_arr[:next_id].copy(), threshold_arr[:next_id].copy(),
            left_arr[:next_id].copy(), right_arr[:next_id].copy(),
            value_arr[:next_id].copy())


def forest_predict(int32_t[::1] feature, double[::1] threshold,
                   int32_t[::1] left, int32_t[::1] right, double[::1] value,
                   int64_t[::1] roots, double[:, ::1] X):
    """Mean of per-tree predictions, accumulated in tree order."""
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t n_trees = roots.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, r
    cdef int64_t node
    cdef double acc
    with nogil:
        for i in range(n):
            acc = 0.0
            for r in range(n_trees):
                node = roots[r]
                while feature[node] >= 0:
                    if X[i, feature[node]] <= threshold[node]:
                        node = left[node]
                    else:
                        node = right[node]
                acc += value[node]
            out[i] = acc / n_trees
    return out_arr
