"""Search driver: budget loop, baselines, traces, sweeps, bootstrapping.

Every run is a pure function of its config (seed included): one master seed
fans out to named sub-streams for task synthesis, sampling, and island
selection, and all emitted trace files are byte-reproducible. Wall time is
reported in the in-memory summary only, never written to files.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .archive import Archive, IslandConfig
from .completion import OPRO
from .grpo import ClipConfig, GrpoDiagnostics, make_group, update_policy
from .policy import TASK_CONTEXT, PolicyParams, init_params, load_params, save_params
from .sampler import MixSpec, construct_group
from .tasks import (GridTask, SearchTask, TwoObjectiveTask, WordSearchTask, eval_program,
                    load_grid_task, parse_program, synthesize_embedding_table,
                    synthesize_grid_task)

logger = logging.getLogger(__name__)

TTT_METHODS = ("grpo", "grpo-greedy", "migrate", "migrate-opro")
BASELINE_METHODS = ("random", "ns", "opro")
METHODS = BASELINE_METHODS + TTT_METHODS

# Sub-stream tags fanned out from the master seed.
_STREAM_TASK = 0
_STREAM_SAMPLING = 1
_STREAM_ISLANDS = 2
_STREAM_WARMSTART = 3

# Per-task defaults; mixes are (alpha, beta, gamma) and mirror the per-task
# configurations the methods are normally run with.
TASK_DEFAULTS: dict[str, dict] = {
    "words": dict(group_size=5, budget=1000, warmstart_count=20, top_k=3, mu=2,
                  learning_rate=0.3, mutation_rate=0.2, stop_threshold=1.0, opro_depth=10,
                  mixes={"random": (5, 0, 0), "ns": (0, 0, 5), "opro": (0, 0, 5),
                         "grpo": (5, 0, 0), "grpo-greedy": (4, 1, 0),
                         "migrate": (0, 1, 4), "migrate-opro": (0, 1, 4)}),
    "molecules": dict(group_size=5, budget=200, warmstart_count=3, top_k=1, mu=1,
                      learning_rate=0.35, mutation_rate=0.25, stop_threshold=None, opro_depth=5,
                      mixes={"random": (5, 0, 0), "ns": (3, 0, 2), "opro": (0, 0, 5),
                             "grpo": (5, 0, 0), "grpo-greedy": (4, 1, 0),
                             "migrate": (2, 1, 2), "migrate-opro": (2, 1, 2)}),
    "grids": dict(group_size=16, budget=1024, warmstart_count=1, top_k=1, mu=1,
                  learning_rate=0.35, mutation_rate=0.25, stop_threshold=1.0, opro_depth=1,
                  mixes={"random": (16, 0, 0), "ns": (12, 0, 4), "opro": (12, 0, 4),
                         "grpo": (16, 0, 0), "grpo-greedy": (15, 1, 0),
                         "migrate": (11, 1, 4), "migrate-opro": (11, 1, 4)}),
}


@dataclass(frozen=True)
class RunConfig:
    """Every knob of a single search run. JSON-serializable one-to-one."""

    method: str
    task: str
    group_size: int
    alpha: int
    beta: int
    gamma: int
    top_k: int
    budget: int
    warmstart_count: int
    learning_rate: float = 0.35
    mu: int = 1
    eps_low: float = 0.2
    eps_high: float = 0.28
    temperature: float = 1.0
    mutation_rate: float = 0.25
    stop_threshold: float | None = None
    islands: bool = False
    island_count: int = 4
    exploit_prob: float = 0.7
    migration_interval: int = 10
    migration_fraction: float = 0.25
    seed: int = 0
    task_file: str | None = None
    task_options: dict = field(default_factory=dict)
    bootstrap_params: str | None = None
    opro_depth: int = 10
    optimizer: str = "sgd"

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.task not in TASK_DEFAULTS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.alpha + self.beta + self.gamma != self.group_size:
            raise ValueError("alpha + beta + gamma must equal group_size")
        if self.alpha + self.gamma < 1:
            raise ValueError("a run must generate at least one new sample per iteration")
        if self.budget <= self.warmstart_count:
            raise ValueError("budget must exceed warmstart_count")
        if self.mu < 1:
            raise ValueError("mu must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError("optimizer must be 'sgd' or 'adam'")

    def mix(self) -> MixSpec:
        return MixSpec(self.alpha, self.beta, self.gamma, self.group_size,
                       self.top_k, self.mutation_rate)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls(**json.loads(text))


def default_config(task: str, method: str, seed: int = 0, **overrides) -> RunConfig:
    """Per-task, per-method defaults with explicit overrides on top."""
    if task not in TASK_DEFAULTS:
        raise ValueError(f"unknown task {task!r}")
    base = TASK_DEFAULTS[task]
    alpha, beta, gamma = base["mixes"][method]
    fields = dict(method=method, task=task, group_size=base["group_size"],
                  alpha=alpha, beta=beta, gamma=gamma, top_k=base["top_k"],
                  budget=base["budget"], warmstart_count=base["warmstart_count"],
                  learning_rate=base["learning_rate"], mutation_rate=base["mutation_rate"],
                  mu=base["mu"], stop_threshold=base["stop_threshold"],
                  opro_depth=base["opro_depth"], seed=seed)
    group_size = overrides.get("group_size", fields["group_size"])
    if group_size != fields["group_size"] and not {"alpha", "beta", "gamma"} & overrides.keys():
        # Rescale the default mix shape onto the requested group size.
        if method in ("random", "grpo"):
            overrides.setdefault("alpha", group_size)
            overrides.setdefault("beta", 0)
            overrides.setdefault("gamma", 0)
        else:
            raise ValueError("custom group_size needs explicit alpha/beta/gamma")
    fields.update(overrides)
    return RunConfig(**fields)


@dataclass
class IterationRecord:
    iteration: int
    evaluations: int
    best_so_far: float
    group_size: int
    new_count: int
    loss: float | None = None
    clip_low_frac: float | None = None
    clip_high_frac: float | None = None
    new_completions: list[tuple[str, float, str]] = field(default_factory=list)


@dataclass
class RunSummary:
    found: bool
    best_score: float
    best_text: str
    total_evaluations: int
    iterations: int
    wall_time: float
    status: str = "ok"
    error: str = ""


@dataclass
class Trace:
    config: RunConfig
    records: list[IterationRecord]
    summary: RunSummary
    final_params: PolicyParams | None = None
    archive: Archive | None = None


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream])


def build_task(config: RunConfig) -> SearchTask:
    """Materialize the task from the config's task-synthesis stream."""
    rng = _rng(config.seed, _STREAM_TASK)
    opts = config.task_options
    if config.task == "words":
        if config.task_file:
            from .tasks import load_embedding_table

            table = load_embedding_table(config.task_file)
        else:
            table = synthesize_embedding_table(
                rng, vocab_size=opts.get("vocab_size", 2000), dim=opts.get("dim", 16),
                clusters=opts.get("clusters", 12), step_scale=opts.get("step_scale", 0.25))
        hidden = opts.get("hidden_word")
        if hidden is None:
            hidden = table.words[int(rng.integers(0, table.size))]
        return WordSearchTask(table, hidden, warmstart_count=config.warmstart_count)
    if config.task == "molecules":
        return TwoObjectiveTask(rng, max_len=opts.get("max_len", 16))
    if config.task_file:
        return load_grid_task(config.task_file, dsl_step_limit=opts.get("dsl_step_limit", 10_000))
    return synthesize_grid_task(rng, dsl_step_limit=opts.get("dsl_step_limit", 10_000))


def _initial_params(config: RunConfig, task: SearchTask) -> PolicyParams:
    if config.bootstrap_params:
        data = Path(config.bootstrap_params).read_bytes()
        return load_params(data, vocab=task.vocab)
    return init_params(task.vocab, max_len=task.max_len,
                       position_buckets=task.position_buckets)


def _run(config: RunConfig) -> Trace:
    started = time.perf_counter()
    is_ttt = config.method in TTT_METHODS
    task = build_task(config)
    params = _initial_params(config, task)
    sampling_rng = _rng(config.seed, _STREAM_SAMPLING)
    island_rng = _rng(config.seed, _STREAM_ISLANDS)
    islands = IslandConfig(config.island_count, config.exploit_prob,
                           config.migration_interval, config.migration_fraction) \
        if config.islands else None
    archive = Archive(islands=islands)

    warm = task.warmstart(_rng(config.seed, _STREAM_WARMSTART))[: config.warmstart_count]
    if warm:
        if islands:
            for i, c in enumerate(warm):
                archive.insert([c], island=i % islands.count)
        else:
            archive.insert(warm)

    mix = config.mix()
    clip = ClipConfig(config.eps_low, config.eps_high)
    local_kind = OPRO if config.method in ("opro", "migrate-opro") else "ns"
    optimizer = None
    if is_ttt and config.optimizer == "adam":
        from .grpo import Adam

        optimizer = Adam(config.learning_rate)

    records: list[IterationRecord] = []
    found = config.stop_threshold is not None and archive.best_score >= config.stop_threshold
    status, error = "ok", ""
    iteration = 0
    try:
        while not found:
            next_new = mix.group_size if len(archive) == 0 else mix.alpha + mix.gamma
            if archive.evaluated_count + next_new > config.budget:
                break
            iteration += 1
            draft = construct_group(mix, params, archive, TASK_CONTEXT, config.temperature,
                                    sampling_rng, born_iteration=iteration,
                                    local_kind=local_kind, opro_depth=config.opro_depth,
                                    islands=config.islands, island_rng=island_rng)
            fresh = task.score_new(draft.online + draft.local, iteration)
            online_scored = fresh[: len(draft.online)]
            local_scored = fresh[len(draft.online):]
            group_members = online_scored + draft.greedy + local_scored
            archive.insert(online_scored + local_scored)
            record = IterationRecord(
                iteration=iteration, evaluations=archive.evaluated_count,
                best_so_far=archive.best_score, group_size=len(group_members),
                new_count=len(fresh),
                new_completions=[(c.text, c.score, c.provenance) for c in fresh])
            records.append(record)
            if config.stop_threshold is not None and archive.best_score >= config.stop_threshold:
                found = True
                break
            if is_ttt:
                group = make_group(params, group_members, iteration)
                params, diags = update_policy(params, group, clip, config.learning_rate,
                                              config.mu, optimizer=optimizer)
                last: GrpoDiagnostics = diags[-1]
                record.loss = last.loss
                record.clip_low_frac = last.clip_low_frac
                record.clip_high_frac = last.clip_high_frac
            if config.islands and iteration % config.migration_interval == 0:
                archive.migrate()
    except Exception as exc:  # partial trace with error status
        status, error = "error", f"{type(exc).__name__}: {exc}"
        logger.warning("run aborted at iteration %d: %s", iteration, error)
        if not isinstance(exc, (ArithmeticError, RuntimeError)):
            raise

    best = archive.best
    summary = RunSummary(found=found, best_score=archive.best_score,
                         best_text="" if best is None else best.text,
                         total_evaluations=archive.evaluated_count,
                         iterations=iteration, wall_time=time.perf_counter() - started,
                         status=status, error=error)
    return Trace(config=config, records=records, summary=summary,
                 final_params=params, archive=archive)


def run_search(config: RunConfig) -> Trace:
    """Run a test-time-training method (gradient updates each iteration)."""
    if config.method not in TTT_METHODS:
        raise ValueError(f"{config.method!r} is not a test-time-training method")
    return _run(config)


def run_baseline(config: RunConfig) -> Trace:
    """Run an inference-only method under the same budget loop, no updates."""
    if config.method not in BASELINE_METHODS:
        raise ValueError(f"{config.method!r} is not a baseline method")
    return _run(config)


def run_any(config: RunConfig) -> Trace:
    return run_search(config) if config.method in TTT_METHODS else run_baseline(config)


# --- trace emission ---------------------------------------------------------

CSV_COLUMNS = ("iteration", "evaluations", "best_so_far", "loss",
               "clip_low_frac", "clip_high_frac")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def trace_csv(trace: Trace) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in trace.records:
        writer.writerow([_fmt(r.iteration), _fmt(r.evaluations), _fmt(r.best_so_far),
                         _fmt(r.loss), _fmt(r.clip_low_frac), _fmt(r.clip_high_frac)])
    return buf.getvalue()


def trace_jsonl(trace: Trace) -> str:
    lines = []
    for r in trace.records:
        lines.append(json.dumps({
            "iteration": r.iteration, "evaluations": r.evaluations,
            "best_so_far": r.best_so_far, "loss": r.loss,
            "clip_low_frac": r.clip_low_frac, "clip_high_frac": r.clip_high_frac,
            "new": [{"text": t, "score": s, "provenance": p} for t, s, p in r.new_completions],
        }, separators=(",", ":")))
    return "".join(line + "\n" for line in lines)


def trace_svg(trace: Trace, width: int = 640, height: int = 400) -> str:
    """Best-so-far vs evaluations as a single-polyline SVG plot."""
    pad = 50
    xs = [r.evaluations for r in trace.records]
    ys = [r.best_so_far for r in trace.records]
    if not xs:
        xs, ys = [0], [0.0]
    x_lo, x_hi = 0, max(xs) or 1
    y_lo, y_hi = min(0.0, min(ys)), max(ys) or 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def sx(x):
        return pad + (x - x_lo) / (x_hi - x_lo) * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - y_lo) / (y_hi - y_lo) * (height - 2 * pad)

    points = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">\n'
        f'  <rect width="{width}" height="{height}" fill="white"/>\n'
        f'  <line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>\n'
        f'  <line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>\n'
        f'  <text x="{width // 2}" y="{height - 12}" text-anchor="middle" font-size="14">evaluations</text>\n'
        f'  <text x="14" y="{height // 2}" text-anchor="middle" font-size="14" '
        f'transform="rotate(-90 14 {height // 2})">best-so-far</text>\n'
        f'  <polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{points}"/>\n'
        f"</svg>\n"
    )


def emit_trace(trace: Trace, formats: tuple[str, ...], out_dir: str | Path,
               stem: str = "trace") -> list[Path]:
    """Write trace files atomically; on failure no partial files remain."""
    renderers = {"csv": trace_csv, "jsonl": trace_jsonl, "svg": trace_svg}
    unknown = set(formats) - renderers.keys()
    if unknown:
        raise ValueError(f"unknown trace formats: {sorted(unknown)}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rendered = {fmt: renderers[fmt](trace) for fmt in formats}
    written: list[Path] = []
    tmp_paths: list[Path] = []
    try:
        for fmt, content in rendered.items():
            final = out_dir / f"{stem}.{fmt}"
            tmp = out_dir / f"{stem}.{fmt}.tmp"
            tmp.write_text(content, encoding="utf-8")
            tmp_paths.append(tmp)
            written.append(final)
        for tmp, final in zip(tmp_paths, written):
            os.replace(tmp, final)
    except OSError:
        for tmp in tmp_paths:
            tmp.unlink(missing_ok=True)
        raise
    return written


# --- sweeps -----------------------------------------------------------------

SWEEP_CHECKPOINTS = (0.25, 0.5, 0.75, 1.0)


def _best_at(trace: Trace, evaluations: int) -> float:
    best = -np.inf
    for r in trace.records:
        if r.evaluations <= evaluations:
            best = r.best_so_far
        else:
            break
    if best == -np.inf and trace.records:
        best = trace.records[0].best_so_far
    return best


def _sweep_config(base: RunConfig, point: dict, seed: int) -> RunConfig:
    fields = {"alpha", "beta", "gamma", "mutation_rate", "exploit_prob"}
    unknown = point.keys() - fields - {"p", "mutationRate"}
    if unknown:
        raise ValueError(f"unknown sweep fields: {sorted(unknown)}")
    mapped = {("exploit_prob" if k == "p" else "mutation_rate" if k == "mutationRate" else k): v
              for k, v in point.items()}
    return replace(base, seed=seed, **mapped)


def _sweep_run(args: tuple[RunConfig, dict, int]) -> Trace:
    base, point, seed = args
    return _run(_sweep_config(base, point, seed))


def sweep(base: RunConfig, grid: list[dict], seeds: list[int]) -> list[dict]:
    """Run every (grid point x seed) combination and aggregate best-so-far.

    Invalid points (mix does not sum to the group size) are skipped with a
    logged reason. Each row carries mean/std of best-so-far at quarter-budget
    checkpoints plus the found rate. MIGRATE_THREADS > 1 runs points in
    parallel processes; aggregation order is independent of scheduling.
    """
    if not seeds:
        logger.warning("sweep called with no seeds; returning an empty table")
        return []
    jobs: list[tuple[RunConfig, dict, int]] = []
    valid_points: list[dict] = []
    for point in grid:
        try:
            _sweep_config(base, point, seeds[0])
        except ValueError as exc:
            logger.warning("skipping sweep point %s: %s", point, exc)
            continue
        valid_points.append(point)
        jobs.extend((base, point, seed) for seed in seeds)

    workers = int(os.environ.get("MIGRATE_THREADS", "1") or "1")
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            traces = list(pool.map(_sweep_run, jobs))
    else:
        traces = [_sweep_run(job) for job in jobs]

    rows: list[dict] = []
    for p_idx, point in enumerate(valid_points):
        group = traces[p_idx * len(seeds): (p_idx + 1) * len(seeds)]
        cfg = _sweep_config(base, point, seeds[0])
        row: dict = {"alpha": cfg.alpha, "beta": cfg.beta, "gamma": cfg.gamma,
                     "mutation_rate": cfg.mutation_rate, "exploit_prob": cfg.exploit_prob,
                     "seeds": len(seeds),
                     "found_rate": float(np.mean([t.summary.found for t in group]))}
        for frac in SWEEP_CHECKPOINTS:
            mark = int(round(frac * base.budget))
            values = np.asarray([_best_at(t, mark) for t in group])
            tag = f"best_at_{int(frac * 100)}"
            row[f"{tag}_mean"] = float(values.mean())
            row[f"{tag}_std"] = float(values.std())
        rows.append(row)
    return rows


def sweep_to_csv(rows: list[dict], path: str | Path) -> None:
    columns = ["alpha", "beta", "gamma", "mutation_rate", "exploit_prob", "seeds", "found_rate"]
    for frac in SWEEP_CHECKPOINTS:
        tag = f"best_at_{int(frac * 100)}"
        columns += [f"{tag}_mean", f"{tag}_std"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


# --- bootstrapping from solved tasks ----------------------------------------

@dataclass(frozen=True)
class SolvedRun:
    """Artifacts of a solved run: its best program and saved policy weights."""

    name: str
    program_tokens: tuple[int, ...]
    params_path: str


def bootstrap_nearest(unsolved: GridTask, solved_runs: list[SolvedRun],
                      base: RunConfig) -> RunConfig:
    """Pick the donor whose best program scores highest on the unsolved
    task's training inputs and start from its saved weights.

    Ties go to the earliest donor; if no donor program parses, the returned
    config keeps a zero initialization (with a logged warning).
    """
    if not solved_runs:
        raise ValueError("need at least one solved run")
    best_idx, best_score = None, -np.inf
    for i, run in enumerate(solved_runs):
        program = parse_program(run.program_tokens)
        if program is None:
            logger.warning("donor %s has an unparseable program; skipping", run.name)
            continue
        score = eval_program(unsolved, program, "train")
        if score > best_score:
            best_idx, best_score = i, score
    if best_idx is None:
        logger.warning("no donor program parseable; falling back to zero-initialized params")
        return replace(base, bootstrap_params=None)
    return replace(base, bootstrap_params=solved_runs[best_idx].params_path)


def save_run_artifacts(trace: Trace, out_dir: str | Path) -> None:
    """Persist config, best completion, and (for TTT runs) final weights."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(trace.config.to_json() + "\n", encoding="utf-8")
    archive = getattr(trace, "archive", None)
    best = archive.best if archive is not None else None
    record = {"text": "" if best is None else best.text,
              "score": None if best is None else best.score,
              "tokens": [] if best is None else list(best.tokens),
              "found": trace.summary.found}
    (out_dir / "best.json").write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")
    params = getattr(trace, "final_params", None)
    if params is not None and trace.config.method in TTT_METHODS:
        (out_dir / "params.mgp").write_bytes(save_params(params))
    if archive is not None:
        archive.dump_jsonl(out_dir / "archive.jsonl")
