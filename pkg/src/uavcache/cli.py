"""Experiment runner.

Runs seeded replications of the learning strategies next to a frozen
pre-loading benchmark and writes per-run CSVs, per-series aggregates and
plot-ready data files. Exit status: 0 success, 2 configuration error,
3 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .bandit import Strategy
from .config import RunConfig, load_config
from .metrics import aggregate, moving_average, series, write_metrics_csv
from .model import ConfigError
from .preload import Policy, write_plan_csv
from .sim import build_world, run_simulation, write_event_log
from .workload import RequestStream, community_rng, write_trace

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

PAPER_STRATEGIES = (Strategy.EPSILON_GREEDY, Strategy.UCB, Strategy.HYBRID)
RECIPES = {
    "fig3": {"strategies": PAPER_STRATEGIES, "tads": (300.0,)},
    "fig4": {"strategies": (Strategy.HYBRID,), "tads": (300.0, 600.0, 900.0, 1200.0)},
    "fig5": {"strategies": (Strategy.HYBRID,), "tads": None},
    "custom": {"strategies": None, "tads": None},
}
DELAY_WINDOW = 20
FINAL_WINDOW = 50


@dataclass(frozen=True)
class Job:
    name: str  # series name, e.g. "hybrid" or "benchmark-vbc"
    strategy: str | None
    freeze: str | None
    seed: int
    tad_values: tuple[float, ...]
    tad_label: str
    benchmark: str = Policy.VBC.value


def _tad_label(tads: tuple[float, ...]) -> str:
    return "tad" + "-".join(f"{t:g}" for t in tads)


def _atomic(path: Path, write) -> None:
    """Write through a ``.partial`` file renamed into place once complete."""
    tmp = path.with_name(path.name + ".partial")
    write(tmp)
    os.replace(tmp, path)


def _header(run: RunConfig, seed) -> str:
    return f"config_hash={run.digest} seed={seed}"


def _run_job(run: RunConfig, job: Job, out: Path, event_log: bool) -> list:
    cfg = run.system.replace(rng_seed=job.seed, tad_values=job.tad_values)
    world = build_world(cfg, Policy(job.benchmark))
    result = run_simulation(cfg, run.epochs, strategy=job.strategy, freeze=job.freeze, world=world,
                            log_events=event_log)
    stem = f"{job.name}_{job.tad_label}_seed{job.seed}"
    header = _header(run, job.seed)
    runs = out / "runs"
    _atomic(runs / f"{stem}.csv", lambda p: write_metrics_csv(p, result.metrics, header))
    if result.agent_snapshots is not None:
        _atomic(runs / f"{stem}_agents.csv", lambda p: _write_snapshots(p, result.agent_snapshots, header))
    if job.freeze is not None:
        _atomic(out / "plans" / f"plan_{job.freeze}_{job.tad_label}_seed{job.seed}.csv",
                lambda p: write_plan_csv(p, world.benchmark, header))
    if event_log:
        _atomic(out / "events" / f"{stem}.csv", lambda p: write_event_log(p, result.event_log, header))
    return result.metrics


def _write_snapshots(path, snapshots, header: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {header}\n")
        w = csv.writer(fh)
        w.writerow(["anchor_id", "content_id", "Q", "pull_count"])
        for a, rows in enumerate(snapshots):
            for cid, q, n in rows:
                w.writerow([a, cid, repr(q), n])


def _write_trace(run: RunConfig, seed: int, out: Path) -> None:
    cfg = run.system.replace(rng_seed=seed)
    world = build_world(cfg)
    horizon = run.epochs * cfg.epoch_seconds

    def events():
        for a, profile in enumerate(world.profiles):
            stream = RequestStream(profile, world.catalog, cfg.request_rate, community_rng(seed, a))
            yield from stream.take_until(horizon).events()

    _atomic(out / "traces" / f"trace_seed{seed}.csv",
            lambda p: write_trace(p, events(), _header(run, seed)))


def _table(path: Path, header: str, columns: Sequence[str], rows) -> None:
    def write(p):
        with open(p, "w", newline="") as fh:
            fh.write(f"# {header}\n")
            fh.write("# " + " ".join(columns) + "\n")
            for row in rows:
                fh.write(" ".join(_fmt(v) for v in row) + "\n")
    _atomic(path, write)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(round(float(v), 10))
    return str(v)


def _write_outputs(run: RunConfig, jobs: list[Job], results: list, out: Path, recipe: str) -> None:
    grouped: dict[tuple[str, str], list] = {}
    for job, hist in zip(jobs, results):
        grouped.setdefault((job.name, job.tad_label), []).append(hist)
    header = _header(run, "all")
    agg_dir = out / "aggregate"
    for (name, tad), runs in grouped.items():
        rows = aggregate(runs)
        cols = list(rows[0].keys())

        def write(p, rows=rows, cols=cols):
            with open(p, "w", newline="") as fh:
                fh.write(f"# {header}\n")
                w = csv.DictWriter(fh, fieldnames=cols)
                w.writeheader()
                for r in rows:
                    w.writerow({k: _fmt(v) for k, v in r.items()})
        _atomic(agg_dir / f"{name}_{tad}.csv", write)

    plots = out / "plots"
    tads = sorted({j.tad_label for j in jobs}, key=lambda s: [float(x) for x in s[3:].split("-")])
    names = list(dict.fromkeys(j.name for j in jobs))
    multi = len(tads) > 1
    for tad in tads:
        suffix = f"_{tad}" if multi else ""
        present = [n for n in names if (n, tad) in grouped]
        n_epochs = min(len(h) for n in present for h in grouped[(n, tad)])
        epochs = np.arange(n_epochs)
        # Fig. 3a: availability per epoch; Fig. 3b: moving-average delay
        for fig, col, smooth in (("fig3a", "availability", False), ("fig3b", "mean_delay", True)):
            cols, data = ["epoch"], [epochs]
            for n in present:
                mat = np.array([series(h, col)[:n_epochs] for h in grouped[(n, tad)]])
                if smooth:
                    mat = np.array([moving_average(r, DELAY_WINDOW) for r in mat])
                cols += [f"{n}_mean", f"{n}_std"]
                data += [mat.mean(0), _std(mat)]
            _table(plots / f"{fig}{suffix}.dat", header, cols, zip(*data))
        # Fig. 5: per-anchor and per-ferry similarity of the learning runs
        learners = [n for n in present if not n.startswith("benchmark")]
        if learners:
            lead = "hybrid" if "hybrid" in learners else learners[0]
            for fig, attr in (("fig5a", "jws_per_anchor"), ("fig5b", "jws_per_ferry")):
                stack = np.array([[getattr(m, attr) for m in h[:n_epochs]] for h in grouped[(lead, tad)]])
                if stack.size == 0 or stack.shape[-1] == 0:
                    continue
                per = stack.mean(0)
                label = "anchor" if attr == "jws_per_anchor" else "ferry"
                cols = ["epoch"] + [f"{label}{i}" for i in range(per.shape[1])] + ["mean"]
                _table(plots / f"{fig}{suffix}.dat", header, cols,
                       (([e] + list(per[e]) + [per[e].mean()]) for e in range(n_epochs)))
    # Fig. 4: final-window availability against TAD
    cols, rows = ["tad"], []
    for n in names:
        cols += [f"{n}_mean", f"{n}_std"]
    for tad in tads:
        row = [tad[3:]]
        for n in names:
            finals = np.array([series(h, "availability")[-FINAL_WINDOW:].mean()
                               for h in grouped.get((n, tad), [])])
            row += [finals.mean() if finals.size else float("nan"), _std(finals)]
        rows.append(row)
    _table(plots / "fig4.dat", header, cols, rows)


def _std(mat: np.ndarray):
    mat = np.asarray(mat, dtype=np.float64)
    if mat.shape[0] < 2:
        return np.zeros(mat.shape[1:]) if mat.ndim > 1 else 0.0
    return mat.std(0, ddof=1)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uavcache", description=__doc__.splitlines()[0])
    p.add_argument("--config", type=Path, help="key = value file; missing keys take defaults")
    p.add_argument("--recipe", choices=sorted(RECIPES), default="custom")
    p.add_argument("--seeds", type=int, default=10, help="replications (seeds rng_seed .. rng_seed+N-1)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", type=Path, default=Path("results"))
    p.add_argument("--strategy", choices=[s.value for s in Strategy],
                   help="learning strategy for the custom recipe (default hybrid)")
    p.add_argument("--tad", type=float, action="append",
                   help="TAD in seconds; repeat to sweep (overrides the recipe)")
    p.add_argument("--freeze-benchmark", choices=[x.value for x in Policy], default=Policy.VBC.value,
                   help="pre-loading policy used as benchmark and similarity reference")
    p.add_argument("--epochs", type=int, help="horizon override")
    p.add_argument("--event-log", action="store_true", help="also write the full event log of every run")
    p.add_argument("--trace", action="store_true", help="also write each seed's request trace")
    return p


def make_jobs(run: RunConfig, recipe: str, seeds: int, strategy: str | None,
              tads: Sequence[float] | None, benchmark: str) -> list[Job]:
    spec = RECIPES[recipe]
    strategies = spec["strategies"] or (Strategy(strategy or Strategy.HYBRID),)
    if recipe == "custom" and strategy:
        strategies = (Strategy(strategy),)
    if tads:
        sweep = [(float(t),) for t in tads]
    elif spec["tads"]:
        sweep = [(t,) for t in spec["tads"]]
    else:
        sweep = [tuple(run.system.tad_values)]
    base = run.system.rng_seed
    jobs = []
    for tv in sweep:
        run.system.replace(tad_values=tv)  # range check
        label = _tad_label(tv)
        for i in range(seeds):
            jobs.append(Job(f"benchmark-{benchmark}", None, benchmark, base + i, tv, label, benchmark))
            for s in strategies:
                jobs.append(Job(s.value, s.value, None, base + i, tv, label, benchmark))
    return jobs


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.seeds < 1:
            raise ConfigError("--seeds", "need at least one seed")
        if args.workers < 1:
            raise ConfigError("--workers", "need at least one worker")
        overrides = {"epochs": args.epochs} if args.epochs is not None else None
        run = load_config(args.config, overrides)
        jobs = make_jobs(run, args.recipe, args.seeds, args.strategy, args.tad, args.freeze_benchmark)
    except (ConfigError, OSError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        out = args.out
        for sub in ("runs", "aggregate", "plots", "plans") + (("events",) if args.event_log else ()) \
                + (("traces",) if args.trace else ()):
            (out / sub).mkdir(parents=True, exist_ok=True)
        _atomic(out / "config.resolved",
                lambda p: p.write_text(f"# {_header(run, 'all')}\n" + run.echo()))
        print(run.echo(), end="")
        print(f"# {len(jobs)} runs, {run.epochs} epochs each, output in {out}")
        if args.workers == 1:
            results = [_run_job(run, j, out, args.event_log) for j in jobs]
        else:
            with ProcessPoolExecutor(max_workers=args.workers) as pool:
                futures = [pool.submit(_run_job, run, j, out, args.event_log) for j in jobs]
                results = [f.result() for f in futures]
        if args.trace:
            for seed in sorted({j.seed for j in jobs}):
                _write_trace(run, seed, out)
        _write_outputs(run, jobs, results, out, args.recipe)
        _summary(jobs, results)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as err:  # noqa: BLE001 - any failure maps to the runtime exit code
        traceback.print_exc()
        print(f"runtime failure: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _summary(jobs: list[Job], results: list) -> None:
    table: dict[tuple[str, str], list[float]] = {}
    for job, hist in zip(jobs, results):
        table.setdefault((job.name, job.tad_label), []).append(
            float(series(hist, "availability")[-FINAL_WINDOW:].mean()))
    for (name, tad), vals in table.items():
        print(f"{name:>18} {tad:>10}  final availability {np.mean(vals):.4f} over {len(vals)} seed(s)")


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())


__all__ = ["Job", "RECIPES", "build_parser", "main", "make_jobs"]
