"""Command-line front door: run / sweep / bootstrap."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .harness import (METHODS, RunConfig, SolvedRun, bootstrap_nearest, build_task,
                      default_config, emit_trace, run_any, save_run_artifacts, sweep,
                      sweep_to_csv)
from .tasks import compute_metrics, load_grid_task


def _add_run_overrides(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--task", choices=("words", "molecules", "grids"), default="words")
    parser.add_argument("--method", choices=METHODS, default="migrate")
    parser.add_argument("--budget", type=int)
    parser.add_argument("--alpha", type=int)
    parser.add_argument("--beta", type=int)
    parser.add_argument("--gamma", type=int)
    parser.add_argument("--group-size", type=int)
    parser.add_argument("--topk", type=int, dest="top_k")
    parser.add_argument("--mu", type=int)
    parser.add_argument("--eps-low", type=float, dest="eps_low")
    parser.add_argument("--eps-high", type=float, dest="eps_high")
    parser.add_argument("--lr", type=float, dest="learning_rate")
    parser.add_argument("--temperature", type=float)
    parser.add_argument("--mutation-rate", type=float, dest="mutation_rate")
    parser.add_argument("--stop-threshold", type=float, dest="stop_threshold")
    parser.add_argument("--warmstart", type=int, dest="warmstart_count")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--islands", action="store_true", default=None)
    parser.add_argument("--island-count", type=int, dest="island_count")
    parser.add_argument("--exploit-prob", type=float, dest="exploit_prob")
    parser.add_argument("--task-file", dest="task_file")
    parser.add_argument("--bootstrap-params", dest="bootstrap_params")
    parser.add_argument("--config", help="JSON file mirroring RunConfig; flags override it")


_OVERRIDE_FIELDS = ("budget", "alpha", "beta", "gamma", "group_size", "top_k", "mu",
                    "eps_low", "eps_high", "learning_rate", "temperature", "mutation_rate",
                    "stop_threshold", "warmstart_count", "islands", "island_count",
                    "exploit_prob", "task_file", "bootstrap_params")


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {name: getattr(args, name) for name in _OVERRIDE_FIELDS
                 if getattr(args, name, None) is not None}
    if args.config:
        base = RunConfig.from_json(Path(args.config).read_text(encoding="utf-8"))
        merged = {**base.__dict__, **overrides,
                  "method": args.method, "task": args.task, "seed": args.seed}
        return RunConfig(**merged)
    return default_config(args.task, args.method, seed=args.seed, **overrides)


def _cmd_run(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    trace = run_any(config)
    if args.out:
        out = Path(args.out)
        emit_trace(trace, tuple(args.formats.split(",")), out)
        save_run_artifacts(trace, out)
    s = trace.summary
    print(f"method={config.method} task={config.task} seed={config.seed}")
    print(f"found={s.found} best_score={s.best_score:.6f} best={s.best_text!r}")
    print(f"evaluations={s.total_evaluations} iterations={s.iterations} "
          f"wall_time={s.wall_time:.2f}s status={s.status}")
    if config.task == "grids" and trace.archive is not None:
        metrics = compute_metrics(trace.archive.entries, build_task(config))
        print(f"pass_at_2={metrics.pass_at_2} oracle={metrics.oracle}")
    return 0 if s.status == "ok" else 1


def _cmd_sweep(args: argparse.Namespace) -> int:
    base = _config_from_args(args)
    grid = json.loads(Path(args.grid).read_text(encoding="utf-8"))
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()] if args.seeds else []
    rows = sweep(base, grid, seeds)
    out = Path(args.out) if args.out else Path("sweep.csv")
    if out.is_dir():
        out = out / "sweep.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    sweep_to_csv(rows, out)
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def _cmd_bootstrap(args: argparse.Namespace) -> int:
    unsolved = load_grid_task(args.task)
    solved_dir = Path(args.solved_dir)
    runs = []
    for sub in sorted(p for p in solved_dir.iterdir() if p.is_dir()):
        best_file = sub / "best.json"
        params_file = sub / "params.mgp"
        if not (best_file.exists() and params_file.exists()):
            continue
        best = json.loads(best_file.read_text(encoding="utf-8"))
        runs.append(SolvedRun(name=sub.name, program_tokens=tuple(best.get("tokens", ())),
                              params_path=str(params_file)))
    if not runs:
        print("no solved runs found under", solved_dir, file=sys.stderr)
        return 1
    base = default_config("grids", args.method, seed=args.seed, task_file=args.task)
    config = bootstrap_nearest(unsolved, runs, base)
    text = config.to_json()
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        print(f"wrote bootstrap config to {args.out}")
    else:
        print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="migrate",
                                     description="Mixed-policy GRPO test-time search")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one search")
    _add_run_overrides(run_p)
    run_p.add_argument("--out", help="directory for trace files and run artifacts")
    run_p.add_argument("--formats", default="csv,jsonl,svg")
    run_p.set_defaults(func=_cmd_run)

    sweep_p = sub.add_parser("sweep", help="grid of mix parameters x seeds")
    _add_run_overrides(sweep_p)
    sweep_p.add_argument("--grid", required=True, help="JSON list of override points")
    sweep_p.add_argument("--seeds", required=True, help="comma-separated seed list")
    sweep_p.add_argument("--out", help="output CSV path or directory")
    sweep_p.set_defaults(func=_cmd_sweep)

    boot_p = sub.add_parser("bootstrap", help="pick nearest solved donor for a grid task")
    boot_p.add_argument("--solved-dir", required=True,
                        help="directory of run artifact dirs (best.json + params.mgp)")
    boot_p.add_argument("--task", required=True, help="grid task JSON file")
    boot_p.add_argument("--method", choices=METHODS, default="migrate")
    boot_p.add_argument("--seed", type=int, default=0)
    boot_p.add_argument("--out", help="where to write the resulting config JSON")
    boot_p.set_defaults(func=_cmd_bootstrap)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
