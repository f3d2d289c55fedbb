"""Command line entry point: single runs, seed sweeps, throughput benchmarks and replays.

Exit codes: 0 arrival (or success), 1 error, 2 collision, 3 timeout.
"""

from __future__ import annotations

import argparse
import filecmp
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .sim import config as config_mod
from .sim.scenario import CSV_HEADERS, run_scenario

log = logging.getLogger("pyramid_planner")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_COLLISION = 2
EXIT_TIMEOUT = 3
OUTCOME_CODES = {"arrival": EXIT_OK, "collision": EXIT_COLLISION, "timeout": EXIT_TIMEOUT}
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument errors exit with the generic error code, not argparse's 2 (which means collision here)."""

    def error(self, message):
        raise UsageError(message)


def parse_seeds(text: str) -> list[int]:
    """``A..B`` (both ends included) or a single integer."""
    if ".." in text:
        lo, hi = text.split("..", 1)
        try:
            a, b = int(lo), int(hi)
        except ValueError:
            raise UsageError(f"bad seed range {text!r}") from None
        if b < a:
            raise UsageError(f"empty seed range {text!r}")
        return list(range(a, b + 1))
    try:
        return [int(text)]
    except ValueError:
        raise UsageError(f"bad seed {text!r}") from None


def _load_config(args) -> dict:
    doc: dict = {}
    if args.config is not None:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise config_mod.ConfigInvalid(f"{path}: not valid JSON ({exc})") from None
    planner = dict(doc.get("planner", {}))
    if getattr(args, "budget", None) is not None:
        planner["budget"] = args.budget
    if getattr(args, "deadline_ms", None) is not None:
        planner["deadline_ms"] = args.deadline_ms
    if planner:
        doc = {**doc, "planner": planner}
    return config_mod.resolve(doc)


def _run_one(cfg: dict, seed: int, out: Path, plots: bool) -> dict:
    mlog = run_scenario(cfg, seed)
    mlog.write(out)
    if plots:
        from .plots import render_run

        render_run(out)
    return mlog.summary


def cmd_run(args) -> int:
    cfg = _load_config(args)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    out = Path(args.out)
    summary = _run_one(cfg, seed, out, not args.no_plots)
    print(f"seed {seed}: {summary['outcome']} (mission time {summary['mission_time']}, min clearance {summary['min_clearance']:.3f} m)")
    return OUTCOME_CODES[summary["outcome"]]


def _sweep_job(job):
    cfg, seed, out, plots = job
    return _run_one(cfg, seed, Path(out), plots)


def aggregate(summaries: list[dict]) -> dict:
    """Arrival rate plus clearance, speed and mission-time statistics over a sweep."""
    n = len(summaries)

    def stats(values):
        values = [v for v in values if v is not None]
        if not values:
            return None
        arr = np.asarray(values, dtype=float)
        return {"min": float(arr.min()), "mean": float(arr.mean()), "max": float(arr.max())}

    arrivals = [s for s in summaries if s["outcome"] == "arrival"]
    return {
        "runs": n,
        "seeds": [s["seed"] for s in summaries],
        "outcomes": {s["seed"]: s["outcome"] for s in summaries},
        "arrivals": len(arrivals),
        "arrival_rate": len(arrivals) / n if n else 0.0,
        "collisions": sum(s["outcome"] == "collision" for s in summaries),
        "timeouts": sum(s["outcome"] == "timeout" for s in summaries),
        "min_clearance": stats([s["min_clearance"] for s in summaries]),
        "max_axis_speed": stats([s["max_axis_speed"] for s in summaries]),
        "max_speed": stats([s["max_speed"] for s in summaries]),
        "mission_time": stats([s["mission_time"] for s in arrivals]),
        "soundness_violations": sum(s["soundness"]["violations"] for s in summaries),
        "soundness_world_violations": sum(s["soundness"]["world_violations"] for s in summaries),
        "soundness_checked": sum(s["soundness"]["checked"] for s in summaries),
    }


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    if args.seeds is not None:
        seeds = parse_seeds(args.seeds)
    else:
        seeds = cfg.get("seeds") or list(range(10))
    if not seeds:
        raise UsageError("empty seed range")
    out = Path(args.out)
    jobs = [(cfg, s, str(out / f"seed-{s:03d}"), not args.no_plots) for s in seeds]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            summaries = list(pool.map(_sweep_job, jobs))
    else:
        summaries = [_sweep_job(j) for j in jobs]
    agg = aggregate(summaries)
    out.mkdir(parents=True, exist_ok=True)
    (out / "aggregate.json").write_text(json.dumps(agg, indent=2, sort_keys=True) + "\n")
    for s in summaries:
        print(f"seed {s['seed']}: {s['outcome']}")
    print(f"arrival rate {agg['arrival_rate']:.2f} ({agg['arrivals']}/{agg['runs']})")
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import run_bench

    cfg = _load_config(args)
    planner_cfg = config_mod.build(cfg)[0]
    report = run_bench(
        width=args.width,
        height=args.height,
        focal=args.focal,
        obstacles=args.obstacles,
        budget=planner_cfg.budget,
        repeats=args.repeats,
        seed=args.seed if args.seed is not None else 0,
        config=planner_cfg,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "bench.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(
        f"{report['frame']['width']}x{report['frame']['height']}, {report['frame']['obstacles']} obstacles: "
        f"median cycle {report['cycle_ms']['median']:.1f} ms for {report['sampled_per_cycle']:.0f} candidates, "
        f"{report['candidates_per_frame']:.0f} per {report['frame_budget_ms']:.1f} ms frame"
    )
    return EXIT_OK


def cmd_replay(args) -> int:
    """Re-run a logged run from its config.json and compare every CSV byte for byte."""
    run_dir = Path(args.run_dir)
    cfg_file = run_dir / "config.json"
    if not cfg_file.is_file():
        raise UsageError(f"no config.json in {run_dir}")
    cfg = json.loads(cfg_file.read_text())
    seed = int(cfg.get("seed", 0))
    with tempfile.TemporaryDirectory() as tmp:
        run_scenario(config_mod.resolve(cfg), seed).write(tmp)
        names = [f"{name}.csv" for name in CSV_HEADERS] + ["summary.json"]
        differing = [n for n in names if not filecmp.cmp(run_dir / n, Path(tmp) / n, shallow=False)]
    if differing:
        print(f"replay differs in: {', '.join(differing)}")
        return EXIT_ERROR
    print(f"replay of seed {seed} is byte-identical")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pyramid-planner", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_default):
        p.add_argument("--config", help="scenario JSON (defaults fill anything missing)")
        p.add_argument("--out", default=out_default, help="output directory")
        p.add_argument("--budget", type=int, help="candidates per planning cycle")
        p.add_argument("--deadline-ms", type=float, dest="deadline_ms", help="wall-clock limit per planning cycle")

    p = sub.add_parser("run", help="fly one mission")
    common(p, "runs/run")
    p.add_argument("--seed", type=int)
    p.add_argument("--no-plots", action="store_true", help="skip the PNG figures")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="fly one mission per seed and aggregate")
    common(p, "runs/sweep")
    p.add_argument("--seeds", help="A..B, both ends included (default 0..9)")
    p.add_argument("--jobs", type=int, default=1, help="runs in parallel")
    p.add_argument("--no-plots", action="store_true", help="skip the PNG figures")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="planner throughput on a synthetic frame")
    common(p, "runs/bench")
    p.add_argument("--seed", type=int)
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=480)
    p.add_argument("--focal", type=float, help="focal length in pixels (default width / 2)")
    p.add_argument("--obstacles", type=int, default=20)
    p.add_argument("--repeats", type=int, default=20)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("replay", help="re-run a logged run and compare its outputs byte for byte")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("PLANNER_LOG_LEVEL", "error").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "jobs", 1) < 1:
            raise UsageError("--jobs must be at least 1")
        return args.func(args)
    except (UsageError, config_mod.ConfigInvalid, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
