"""Command-line pipeline: gen, train-mf, train-predictors, compare, eval.

Exit codes: 0 success, 1 usage error, 2 data/model error. Every command
writes a manifest with the resolved config and input digests, and all
outputs are atomic and byte-deterministic under fixed seeds.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from studysim import _core
from studysim.config import ExperimentConfig, load_config
from studysim.errors import InsufficientData, SingleClass, StudysimError
from studysim.evaluation import (
    build_dropout_dataset,
    build_success_dataset,
    evaluate_dropout,
    evaluate_table1,
    upsample_minority,
)
from studysim.events import derive_dropout_labels, parse_log, write_log
from studysim.factorization import FactorModel, fit_from_stream
from studysim.forest import TASK_CLASSIFICATION, TASK_REGRESSION, Forest, fit_forest
from studysim.metrics import rmse, sign_test_pvalue
from studysim.persist import atomic_write_json, sha256_file, write_csv
from studysim.policies import (
    PolicyParams,
    argmax_select,
    greedy_policy,
    replay_policy,
    train_agent,
)
from studysim.seeding import generator
from studysim.simulation import StudentSimulator, run_episode, write_traces
from studysim.synthetic import SyntheticWorld, gen_log, gen_world

WORLD_FILE = "world.json"
EVENTS_FILE = "events.csv"
MF_FILE = "factor_model.json"
SUCCESS_FOREST_FILE = "success_forest.json"
DROPOUT_FOREST_FILE = "dropout_forest.json"
POLICY_FILE = "policy.json"
METRICS_FILE = "metrics.csv"
ROC_FILE = "roc.csv"
CURVE_FILE = "learning_curve.csv"
COMPARE_RETURNS_FILE = "compare_returns.csv"
COMPARE_SUMMARY_FILE = "compare_summary.csv"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _out_dir(config: ExperimentConfig) -> Path:
    out = Path(config.out_dir)
    if out.exists() and not out.is_dir():
        raise StudysimError(f"output path {out} exists and is not a directory")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, command: str, config: ExperimentConfig,
                    inputs: list[Path], outputs: list[str]) -> None:
    atomic_write_json(out / f"manifest_{command}.json", {
        "command": command,
        "config": config.as_dict(),
        "backend": _core.backend_name(),
        "inputs": {str(p): sha256_file(p) for p in inputs if Path(p).exists()},
        "outputs": sorted(outputs),
    })


def _load_labeled_log(config: ExperimentConfig, out: Path):
    log_path = config.resolved_log_path()
    if not log_path.exists():
        raise StudysimError(f"event log not found: {log_path} (run 'gen' first?)")
    log = parse_log(log_path, strict=config.strict)
    sizes = None
    world_path = out / WORLD_FILE
    if world_path.exists():
        sizes = SyntheticWorld.load(world_path).workbook_sizes
    return derive_dropout_labels(log, workbook_sizes=sizes), log_path


# -- commands ----------------------------------------------------------------


def cmd_gen(config: ExperimentConfig) -> None:
    out = _out_dir(config)
    world = gen_world(config.synth_users, config.synth_exercises,
                      config.synth_workbooks, config.seed,
                      dropout_coeffs=config.dropout_coeffs())
    log = gen_log(world, config.synth_order_policy, config.synth_max_events)
    write_log(log, out / EVENTS_FILE)
    world.save(out / WORLD_FILE)
    _write_manifest(out, "gen", config, [], [EVENTS_FILE, WORLD_FILE])
    print(f"gen: {len(log)} events, {len(log.user_index)} users -> {out / EVENTS_FILE}")


def cmd_train_mf(config: ExperimentConfig) -> None:
    out = _out_dir(config)
    log, log_path = _load_labeled_log(config, out)
    if len(log) == 0:
        raise InsufficientData("event log contains no events")
    model = fit_from_stream(log, config.mf_hyperparams(), seed=config.seed,
                            epochs=config.mf_epochs)
    model.save(out / MF_FILE)
    triples = [(ev.user_id, ev.exercise_id, float(ev.score)) for ev in log.events]
    preds = [model.predict_score(u, e) for u, e, _ in triples]
    train_rmse = rmse(preds, [s for _, _, s in triples])
    _write_manifest(out, "train-mf", config, [log_path], [MF_FILE])
    print(f"train-mf: {model.n_users} users x {model.n_exercises} exercises, "
          f"training rmse {train_rmse:.4f} -> {out / MF_FILE}")


def cmd_train_predictors(config: ExperimentConfig) -> None:
    out = _out_dir(config)
    log, log_path = _load_labeled_log(config, out)
    mf_path = out / MF_FILE
    if not mf_path.exists():
        raise StudysimError(f"factor model not found: {mf_path} (run 'train-mf' first?)")
    model = FactorModel.load(mf_path)

    rows = evaluate_table1(log, model, window_sizes=(3, 10),
                           forest_config=config.forest_config(seed_offset=11))
    try:
        dropout_eval = evaluate_dropout(log, model, config.window,
                                        forest_config=config.forest_config(seed_offset=12),
                                        seed=config.seed)
    except SingleClass:
        raise SingleClass(
            "the log has no dropout labels (or no survivors); generate more data "
            "or check workbook sizes"
        ) from None

    # The serving success forest is trained on the full log at the selected window.
    X_s, y_s, _ = build_success_dataset(log, model, config.window)
    success_forest = fit_forest(X_s, y_s, config.forest_config(seed_offset=13),
                                task=TASK_REGRESSION)
    X_d, y_d, _ = build_dropout_dataset(log, model, config.window)
    X_bal, y_bal = upsample_minority(X_d, y_d, config.seed)
    dropout_forest = fit_forest(X_bal, y_bal, config.forest_config(seed_offset=14),
                                task=TASK_CLASSIFICATION)

    success_forest.save(out / SUCCESS_FOREST_FILE)
    dropout_forest.save(out / DROPOUT_FOREST_FILE)
    metric_rows = [r.as_csv_row() for r in rows]
    metric_rows.append(("dropout_forest", config.window, "auc", dropout_eval.auc))
    write_csv(out / METRICS_FILE, ("model", "window", "metric", "value"), metric_rows)
    write_csv(out / ROC_FILE, ("fpr", "tpr"), dropout_eval.curve)
    _write_manifest(out, "train-predictors", config, [log_path, mf_path],
                    [SUCCESS_FOREST_FILE, DROPOUT_FOREST_FILE, METRICS_FILE, ROC_FILE])
    for r in rows:
        print(f"train-predictors: {r.model} window={r.window} {r.metric}={r.value:.4f}")
    print(f"train-predictors: dropout auc={dropout_eval.auc:.4f} "
          f"({dropout_eval.n_train} train / {dropout_eval.n_test} test events)")


def _build_simulator(config: ExperimentConfig, out: Path):
    log, log_path = _load_labeled_log(config, out)
    paths = [out / MF_FILE, out / SUCCESS_FOREST_FILE, out / DROPOUT_FOREST_FILE]
    for p in paths:
        if not p.exists():
            raise StudysimError(f"missing snapshot: {p} (run the earlier stages first)")
    model = FactorModel.load(paths[0])
    env = StudentSimulator(
        factors=model,
        success_forest=Forest.load(paths[1]),
        dropout_forest=Forest.load(paths[2]),
        workbooks=log.workbook_index,
        reward=config.reward_config(),
        window=config.window,
    )
    return env, log, [log_path] + paths


def cmd_compare(config: ExperimentConfig) -> None:
    out = _out_dir(config)
    env, log, inputs = _build_simulator(config, out)

    params, curve = train_agent(env, PolicyParams.zeros(config.mf_factors),
                                config.agent_config())
    params.save(out / POLICY_FILE)
    write_csv(out / CURVE_FILE, ("iteration", "mean_return", "std_return"),
              [(pt.iteration, pt.mean_return, pt.std_return) for pt in curve])

    users = log.user_ids
    return_rows = []
    totals = {"replay": [], "greedy": [], "agent": []}
    cumulative = {"replay": 0.0, "greedy": 0.0, "agent": 0.0}
    all_traces = {"replay": [], "greedy": [], "agent": []}
    for episode in range(config.compare_episodes):
        rng = generator(config.seed, 6, episode)
        user_id = users[int(rng.integers(len(users)))]
        last_event = log.events[log.user_index[user_id][-1]]
        workbook_id = last_event.workbook_id
        history = [log.events[p].exercise_id for p in log.user_index[user_id]
                   if log.events[p].workbook_id == workbook_id]
        env_seed = int(rng.integers(2 ** 62))

        traces = {
            "replay": run_episode(
                env, lambda s, c: replay_policy(s, c, history),
                user_id, workbook_id, env_seed),
            "greedy": run_episode(
                env, lambda s, c: greedy_policy(s, c, env),
                user_id, workbook_id, env_seed),
            "agent": run_episode(
                env, lambda s, c: argmax_select(params, s, c, env,
                                                config.agent_temperature),
                user_id, workbook_id, env_seed),
        }
        for name, trace in traces.items():
            totals[name].append(trace.total_return)
            cumulative[name] += trace.total_return
            all_traces[name].append(trace)
            return_rows.append((episode, name, user_id, len(trace.steps),
                                trace.total_return, cumulative[name]))

    trace_files = []
    for name, episode_traces in all_traces.items():
        trace_file = f"traces_{name}.csv"
        write_traces(out / trace_file, episode_traces)
        trace_files.append(trace_file)

    write_csv(out / COMPARE_RETURNS_FILE,
              ("episode", "policy", "user_id", "steps", "episode_return",
               "cumulative_return"),
              return_rows)

    agent = np.asarray(totals["agent"])
    replay = np.asarray(totals["replay"])
    p_value = sign_test_pvalue(agent - replay)
    summary_rows = []
    for name in ("replay", "greedy", "agent"):
        arr = np.asarray(totals[name])
        summary_rows.append((name, float(arr.mean()), float(arr.std()),
                             float(arr.mean() - replay.mean()), p_value if name == "agent" else ""))
    write_csv(out / COMPARE_SUMMARY_FILE,
              ("policy", "mean_return", "std_return", "mean_diff_vs_replay",
               "sign_test_p_vs_replay"),
              summary_rows)
    _write_manifest(out, "compare", config, inputs,
                    [POLICY_FILE, CURVE_FILE, COMPARE_RETURNS_FILE,
                     COMPARE_SUMMARY_FILE] + trace_files)
    for name in ("replay", "greedy", "agent"):
        print(f"compare: {name} mean return {np.mean(totals[name]):.4f}")
    print(f"compare: sign test p (agent > replay) = {p_value:.2e}")


def cmd_eval(config: ExperimentConfig) -> None:
    """Recompute held-out metrics from existing snapshots without refitting them."""
    out = _out_dir(config)
    log, log_path = _load_labeled_log(config, out)
    mf_path = out / MF_FILE
    if not mf_path.exists():
        raise StudysimError(f"factor model not found: {mf_path}")
    model = FactorModel.load(mf_path)
    rows = evaluate_table1(log, model, window_sizes=(3, 10),
                           forest_config=config.forest_config(seed_offset=11))
    dropout_eval = evaluate_dropout(log, model, config.window,
                                    forest_config=config.forest_config(seed_offset=12),
                                    seed=config.seed)
    metric_rows = [r.as_csv_row() for r in rows]
    metric_rows.append(("dropout_forest", config.window, "auc", dropout_eval.auc))
    write_csv(out / METRICS_FILE, ("model", "window", "metric", "value"), metric_rows)
    write_csv(out / ROC_FILE, ("fpr", "tpr"), dropout_eval.curve)
    _write_manifest(out, "eval", config, [log_path, mf_path], [METRICS_FILE, ROC_FILE])
    for r in rows:
        print(f"eval: {r.model} window={r.window} {r.metric}={r.value:.4f}")
    print(f"eval: dropout auc={dropout_eval.auc:.4f}")


# -- argument handling ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="studysim",
                     description="student-interaction simulator pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("gen", "generate a synthetic event log and ground-truth sidecar"),
        ("train-mf", "stream the log through the online factor model"),
        ("train-predictors", "fit success and dropout forests; emit metrics"),
        ("compare", "train the agent and compare policies on paired episodes"),
        ("eval", "recompute metrics from existing snapshots"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", help="flat JSON config file")
        cmd.add_argument("--seed", type=int, help="master seed override")
        cmd.add_argument("--out", help="output directory override")
        cmd.add_argument("--log", help="event log path override")
        strictness = cmd.add_mutually_exclusive_group()
        strictness.add_argument("--strict", dest="strict", action="store_true",
                                default=None, help="reject malformed records")
        strictness.add_argument("--lenient", dest="strict", action="store_false",
                                default=None, help="skip and count malformed records")
    return parser


_COMMANDS = {
    "gen": cmd_gen,
    "train-mf": cmd_train_mf,
    "train-predictors": cmd_train_predictors,
    "compare": cmd_compare,
    "eval": cmd_eval,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config.seed = args.seed
        if args.out is not None:
            config.out_dir = args.out
        if args.log is not None:
            config.log_path = args.log
        if args.strict is not None:
            config.strict = args.strict
        _COMMANDS[args.command](config)
    except StudysimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
