"""Benchmark the compiled kernels against the pure-Python fallback.

Times the three hot paths (forest fitting, forest prediction, online MF
streaming) under each available backend and prints a comparison table.

    python benchmarks/bench_backends.py [--trees N] [--events N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from studysim import _core
from studysim.events import derive_dropout_labels
from studysim.evaluation import build_success_dataset
from studysim.factorization import FactorModel, Hyperparams
from studysim.forest import ForestConfig, fit_forest
from studysim.synthetic import gen_log, gen_world


def time_call(fn) -> tuple[float, object]:
    start = time.perf_counter()
    result = fn()
    return time.perf_counter() - start, result


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--users", type=int, default=150)
    parser.add_argument("--trees", type=int, default=30)
    parser.add_argument("--events", type=int, default=2000)
    args = parser.parse_args()

    world = gen_world(args.users, 100, 5, seed=0)
    log = derive_dropout_labels(gen_log(world), workbook_sizes=world.workbook_sizes)
    events = log.events[: args.events]
    print(f"dataset: {len(log)} events, {len(log.user_index)} users, "
          f"backends: {_core.available_backends()}")

    base_model = FactorModel(Hyperparams(), seed=0)
    for ev in events:
        base_model.observe(ev)
    X, y, _ = build_success_dataset(log, base_model, window=10)
    queries = np.ascontiguousarray(np.tile(X, (3, 1)))
    config = ForestConfig(n_trees=args.trees, seed=1)

    rows = []
    forests = {}
    models = {}
    for backend in _core.available_backends():
        with _core.use_backend(backend):
            t_stream, model = time_call(lambda: _stream(events))
            t_fit, forest = time_call(lambda: fit_forest(X, y, config))
            forest.predict(X[:1])  # pack once outside the timed region
            t_pred, preds = time_call(lambda: forest.predict(queries))
            rows.append((backend, t_stream, t_fit, t_pred))
            forests[backend] = preds
            models[backend] = model

    header = f"{'backend':<8} {'mf stream':>12} {'forest fit':>12} {'predict':>12}"
    print(header)
    print("-" * len(header))
    for backend, t_stream, t_fit, t_pred in rows:
        print(f"{backend:<8} {t_stream:>11.3f}s {t_fit:>11.3f}s {t_pred:>11.3f}s")
    if len(rows) == 2:
        speedups = [rows[1][i] / rows[0][i] for i in (1, 2, 3)]
        print(f"speedup  {speedups[0]:>11.1f}x {speedups[1]:>11.1f}x "
              f"{speedups[2]:>11.1f}x")
        names = list(forests)
        same_preds = np.array_equal(forests[names[0]], forests[names[1]])
        same_factors = np.array_equal(models[names[0]].U, models[names[1]].U)
        print(f"bitwise identical results: predictions={same_preds} "
              f"factors={same_factors}")


def _stream(events):
    model = FactorModel(Hyperparams(), seed=0)
    for ev in events:
        model.observe(ev)
    return model


if __name__ == "__main__":
    main()
