"""Command-line front end.

    coopcbf run <scenario>... [--mode kinematic|full] [--noise DB] [--seed N] [--out DIR]
    coopcbf validate <scenario>...
    coopcbf bench [--repeat N]

Scenarios are file paths or bundled names (``two_obstacles``).  ``run``
exits 0 only if every run meets its thresholds; ``summary.json`` is
written either way.  ``COOPCBF_THREADS`` caps the worker pool.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import report
from .scenario import ScenarioError, load_scenario, validate
from .sim import run_scenario

log = logging.getLogger("coopcbf")


def _run_dir_name(cfg) -> str:
    parts = [cfg.name, cfg.mode]
    if cfg.noise.enabled:
        parts.append(f"noise{cfg.noise.level_db:g}dB")
    parts.append(f"seed{cfg.seed}")
    return "_".join(parts)


def _run_one(job) -> dict:
    spec, mode, noise, seed, duration, out = job
    try:
        cfg = load_scenario(spec).with_overrides(mode=mode, noise_db=noise, seed=seed)
        if duration is not None:
            from dataclasses import replace
            cfg = replace(cfg, duration_s=float(duration))
            validate(cfg)
    except (ScenarioError, FileNotFoundError) as exc:
        return {"scenario": str(spec), "passed": False, "error": str(exc)}
    dest = Path(out) / _run_dir_name(cfg)
    dest.mkdir(parents=True, exist_ok=True)
    try:
        runlog = run_scenario(cfg)
    except Exception as exc:  # recorded, never swallowed silently
        summary = {"scenario": cfg.name, "mode": cfg.mode, "seed": cfg.seed, "passed": False,
                   "error": f"{type(exc).__name__}: {exc}"}
        (dest / "summary.json").write_text(report.summary_json(summary))
        return summary
    summary = report.summarize(runlog, cfg)
    summary["output_dir"] = str(dest)
    (dest / "log.csv").write_text(runlog.csv_text())
    (dest / "timing.csv").write_text(runlog.timing_csv_text())
    (dest / "paths.csv").write_text(report.path_csv_text(runlog))
    (dest / "bars.csv").write_text(report.bars_csv_text(runlog))
    (dest / "paths.svg").write_text(report.svg_text(runlog, cfg))
    (dest / "summary.json").write_text(report.summary_json(summary))
    return summary


def _workers(n_jobs: int) -> int:
    cap = os.environ.get("COOPCBF_THREADS")
    limit = os.cpu_count() or 1
    if cap:
        try:
            limit = max(1, int(cap))
        except ValueError:
            log.warning("ignoring non-integer COOPCBF_THREADS=%r", cap)
    return max(1, min(n_jobs, limit))


def _fmt(x, spec=".3g"):
    return "n/a" if x is None else format(x, spec)


def _line(s: dict) -> str:
    tag = "PASS" if s.get("passed") else "FAIL"
    if "error" in s:
        return f"{tag} {s.get('scenario')}: {s['error']}"
    failed = [k for k, ok in s["checks"].items() if not ok]
    return (f"{tag} {s['scenario']} [{s['mode']}] min_barrier={_fmt(s['min_barrier'])} "
            f"goal_time_s={_fmt(s['goal_time_s'])} max|sep-sqrt(psi)|={_fmt(s['max_abs_sep_error_m'])} "
            f"planner_us(med/max)={_fmt(s['planner_solve_us_median'], '.0f')}/"
            f"{_fmt(s['planner_solve_us_max'], '.0f')} "
            f"mpc_us(med/max)={_fmt(s['mpc_solve_us_median'], '.0f')}/{_fmt(s['mpc_solve_us_max'], '.0f')}"
            + (f" failed={','.join(failed)}" if failed else ""))


def cmd_run(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(s, args.mode, args.noise, args.seed, args.duration, str(out)) for s in args.scenarios]
    n = _workers(len(jobs))
    if n == 1:
        summaries = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            summaries = list(pool.map(_run_one, jobs))
    for s in summaries:
        print(_line(s))
    ok = all(s.get("passed") for s in summaries)
    (out / "summary.json").write_text(json.dumps({"passed": ok, "runs": summaries}, indent=2) + "\n")
    return 0 if ok else 1


def cmd_validate(args) -> int:
    status = 0
    for spec in args.scenarios:
        try:
            cfg = load_scenario(spec)
        except (ScenarioError, FileNotFoundError) as exc:
            print(f"INVALID {spec}: {exc}")
            status = 1
        else:
            print(f"OK {spec} ({cfg.name}: {len(cfg.obstacles)} obstacles, mode {cfg.mode})")
    return status


def cmd_bench(args) -> int:
    from .bench import compiled_available, format_table, run_bench
    avail = compiled_available()
    print("compiled kernels: " + ", ".join(f"{k}={'yes' if v else 'no'}" for k, v in avail.items()))
    print(format_table(run_bench(args.scenario, args.repeat)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coopcbf", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run scenarios and write logs, plot data and summaries")
    r.add_argument("scenarios", nargs="+", help="scenario files or bundled names")
    r.add_argument("--mode", choices=("kinematic", "full"), help="override the scenario mode")
    r.add_argument("--noise", type=float, metavar="DB", help="inject noise at this level (dB, e.g. -43)")
    r.add_argument("--seed", type=int, help="override the scenario seed")
    r.add_argument("--duration", type=float, metavar="S", help="override the time limit (s)")
    r.add_argument("--out", default="runs", help="output directory (default: runs)")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="parse and check scenario files")
    v.add_argument("scenarios", nargs="+")
    v.set_defaults(func=cmd_validate)

    b = sub.add_parser("bench", help="time compiled kernels against the numpy fallbacks")
    b.add_argument("--repeat", type=int, default=200)
    b.add_argument("--scenario", default="two_obstacles")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
