"""Command-line harness: train / eval / replay / bench.

Exit codes: 0 success, 2 input error (config, scenario, checkpoint or metrics
schema), 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import ppo as ppo_mod
from .checkpoint import load_checkpoint, save_checkpoint
from .config import (
    ConfigError,
    RunConfig,
    config_hash,
    default_config,
    load_run_config,
    load_scenario,
    parse_run_config,
)
from .env import VecSwimEnv
from .evaluate import read_metrics_csv, run_scenario, summarize, write_metrics_csv

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_RUNTIME = 3


def _write_training_log(path, rows) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(ppo_mod.LOG_COLUMNS)
        for row in rows:
            writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in ppo_mod.LOG_COLUMNS])


def cmd_train(args) -> int:
    try:
        if args.config:
            run_cfg = load_run_config(args.config, args.override)
        else:
            resolved = default_config()
            from .config import apply_overrides

            run_cfg = parse_run_config(apply_overrides(resolved, args.override))
    except (ConfigError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT

    resolved = dict(run_cfg.resolved)
    if args.seed is not None:
        resolved["seed"] = args.seed
        try:
            run_cfg = parse_run_config(resolved)
        except ConfigError as err:
            print(f"error: {err}", file=sys.stderr)
            return EXIT_INPUT

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    chash = config_hash(run_cfg.resolved)
    with open(out / "resolved_config.json", "w") as f:
        json.dump(run_cfg.resolved, f, indent=2, sort_keys=True)
        f.write("\n")

    def checkpoint_fn(iteration, policy):
        save_checkpoint(out / f"checkpoint_{iteration:05d}.ckpt", policy, chash)
        save_checkpoint(out / "checkpoint.ckpt", policy, chash)

    def progress_fn(row):
        if row["iteration"] % args.print_every == 0 or row["iteration"] == 1:
            print(
                f"iter {row['iteration']:5d}  wall {row['wall_s']:7.1f}s  "
                f"reward {row['norm_mean_reward']:.3f}  entropy {row['entropy']:.2f}",
                flush=True,
            )

    try:
        env = VecSwimEnv(run_cfg.vehicle, run_cfg.env, seed=run_cfg.seed, workers=run_cfg.workers)
        result = ppo_mod.train(
            env,
            run_cfg.ppo,
            seed=run_cfg.seed,
            checkpoint_fn=checkpoint_fn,
            progress_fn=progress_fn if not args.quiet else None,
        )
        env.close()
    except Exception as err:  # noqa: BLE001 - CLI boundary
        print(f"training failed: {err}", file=sys.stderr)
        return EXIT_RUNTIME

    _write_training_log(out / "training_log.csv", result.log_rows)
    final = result.log_rows[-1]
    if not np.isfinite([p for _, p in result.policy.named_parameters()][0]).all():
        print("training produced non-finite parameters", file=sys.stderr)
        return EXIT_RUNTIME
    print(
        f"done: {final['iteration']} iterations, {final['env_steps']} env steps, "
        f"normalized mean reward {final['norm_mean_reward']:.3f}"
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        policy, _meta = load_checkpoint(args.checkpoint)
    except (ValueError, OSError) as err:
        print(f"error: checkpoint: {err}", file=sys.stderr)
        return EXIT_INPUT
    try:
        scenario = load_scenario(args.scenario)
        if args.seed is not None:
            from dataclasses import replace

            scenario = replace(scenario, attitude_seed=args.seed)
        run_cfg: RunConfig = (
            load_run_config(args.config) if args.config else parse_run_config({})
        )
    except (ConfigError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        rows, summary = run_scenario(
            policy,
            run_cfg.vehicle,
            scenario,
            dt_physics=run_cfg.env.dt_physics,
            decimation=run_cfg.env.decimation,
            z_max=run_cfg.env.z_max,
        )
    except Exception as err:  # noqa: BLE001 - CLI boundary
        print(f"evaluation failed: {err}", file=sys.stderr)
        return EXIT_RUNTIME

    write_metrics_csv(out / "metrics.csv", rows)
    with open(out / "summary.json", "w") as f:
        json.dump(summary, f, indent=2)
        f.write("\n")
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_replay(args) -> int:
    metrics_path = Path(args.metrics)
    try:
        data = read_metrics_csv(metrics_path)
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT

    stored = None
    stored_path = metrics_path.parent / "summary.json"
    if stored_path.exists():
        with open(stored_path) as f:
            stored = json.load(f)

    carried_completed = bool(stored["completed"]) if stored else False
    carried_time = stored.get("completion_time_s") if stored else None
    scenario_id = stored.get("scenario_id", "unknown") if stored else "unknown"
    recomputed = summarize(data, scenario_id, carried_completed, carried_time)

    out = Path(args.out) if args.out else metrics_path.parent
    out.mkdir(parents=True, exist_ok=True)
    stride = max(1, int(np.ceil(len(data["t_s"]) / args.trace_rows)))
    with open(out / "trace.csv", "w", newline="") as f:
        writer = csv.writer(f)
        names = list(data.keys())
        writer.writerow(names)
        for i in range(0, len(data["t_s"]), stride):
            writer.writerow([repr(float(data[n][i])) for n in names])
    with open(out / "summary_recomputed.json", "w") as f:
        json.dump(recomputed, f, indent=2)
        f.write("\n")

    if stored is not None:
        for key, value in recomputed.items():
            ref = stored.get(key)
            if isinstance(value, float) and isinstance(ref, (int, float)):
                ok = (np.isnan(value) and np.isnan(ref)) or abs(value - ref) <= 1e-9
            elif isinstance(value, list) and isinstance(ref, list) and len(value) == len(ref):
                ok = all(abs(a - b) <= 1e-9 for a, b in zip(value, ref))
            else:
                ok = value == ref
            if not ok:
                print(f"summary mismatch at '{key}': stored {ref!r}, recomputed {value!r}", file=sys.stderr)
                return EXIT_RUNTIME
        print("recomputed summary matches stored summary")
    else:
        print("no stored summary found; wrote recomputed summary only")
    return EXIT_OK


def cmd_bench(args) -> int:
    from .env import EnvConfig

    cfg = EnvConfig(n_envs=args.n_envs)
    result = bench_mod.run_benchmark(cfg=cfg, seed=args.seed or 0, workers=args.workers, min_seconds=args.seconds)
    print(json.dumps(result, indent=2))
    if args.digest_steps:
        digest = bench_mod.trajectory_digest(cfg=cfg, seed=args.seed or 0, workers=args.workers, steps=args.digest_steps)
        print(f"trajectory digest ({args.digest_steps} steps): {digest}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="auvpilot", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a policy")
    p_train.add_argument("--config", help="run config JSON (defaults used when omitted)")
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--out", default="runs/train")
    p_train.add_argument("--override", action="append", default=[], metavar="KEY.PATH=VALUE")
    p_train.add_argument("--print-every", type=int, default=10)
    p_train.add_argument("--quiet", action="store_true")
    p_train.set_defaults(fn=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a scenario")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--scenario", required=True)
    p_eval.add_argument("--config", help="run config for vehicle/env parameters")
    p_eval.add_argument("--seed", type=int, default=None, help="override the scenario attitude seed")
    p_eval.add_argument("--out", default="runs/eval")
    p_eval.set_defaults(fn=cmd_eval)

    p_replay = sub.add_parser("replay", help="recompute summary and traces from a metrics CSV")
    p_replay.add_argument("--metrics", required=True)
    p_replay.add_argument("--out", default=None)
    p_replay.add_argument("--trace-rows", type=int, default=500)
    p_replay.set_defaults(fn=cmd_replay)

    p_bench = sub.add_parser("bench", help="environment throughput benchmark")
    p_bench.add_argument("--n-envs", type=int, default=2048)
    p_bench.add_argument("--workers", type=int, default=1)
    p_bench.add_argument("--seconds", type=float, default=2.0)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--digest-steps", type=int, default=0)
    p_bench.set_defaults(fn=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
