"""Command-line entry points.

Subcommands: ``generate`` (instance synthesis), ``solve`` (one full run,
writing report/routes/geometry files), ``experiment`` (factorial sweeps
with replications, emitting a metrics table), and ``reevaluate``
(model-free verification of a solve's output files).

Every flag can also be set through an environment variable named
``DRONEAID_<FLAG>`` with dashes as underscores (e.g. ``DRONEAID_OUT_DIR``);
explicit flags win over the environment.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import io
from .driver import RunConfig, run
from .evaluate import check_solution, solution_record
from .instgen import FOCI, GenSpec, generate
from .model import validate_instance
from .scenariogen import make_scenario

ENV_PREFIX = "DRONEAID_"

EXIT_OK = 0
EXIT_SCHEMA = 1
EXIT_NOT_CONVERGED = 3
EXIT_INVALID = 4

logger = logging.getLogger("droneaid.cli")


def _env(flag: str):
    return os.environ.get(ENV_PREFIX + flag.replace("-", "_").upper())


def _add(parser, flag, *, type=str, default=None, **kw):
    env = _env(flag)
    if env is not None:
        default = type(env) if type is not None else env
        kw.pop("required", None)
    parser.add_argument(f"--{flag}", type=type, default=default, **kw)


def _gen_flags(p):
    _add(p, "seed", type=int, default=0, help="random seed")
    _add(p, "communities", type=int, default=60, help="number of affected communities")
    _add(p, "satellites", type=int, default=8, help="number of satellite stations")
    _add(p, "level", type=int, default=1, choices=(1, 2, 3), help="disaster level")
    _add(p, "focus", type=str, default="uniform", choices=FOCI, help="geographic focus")
    _add(p, "gamma-pct", type=float, default=50.0, help="total deviation budget, %% of communities")
    _add(p, "gamma-region-pct", type=float, default=50.0, help="per-region budget, %% of each region")
    _add(p, "trucks", type=int, default=4, help="trucks available")
    _add(p, "drones-per-truck", type=int, default=4, help="drones carried per truck")
    _add(p, "range-miles", type=float, default=35.0, help="drone flying range in miles")
    _add(p, "load", type=float, default=25.0, help="drone carry load in units")
    _add(p, "epsilon", type=float, default=1.0, help="$ convergence tolerance")
    _add(p, "coords-csv", type=str, default=None,
         help="optional CSV of id,latitude,longitude,population rows")


def _solver_flags(p):
    _add(p, "max-outer", type=int, default=25, help="outer scenario iterations")
    _add(p, "max-cg-rounds", type=int, default=50, help="pricing rounds per outer iteration")
    _add(p, "time-limit", type=float, default=None, help="wall-clock limit in seconds")


def _spec_from_args(args, **overrides) -> GenSpec:
    spec = GenSpec(
        seed=args.seed, n_communities=args.communities, n_satellites=args.satellites,
        focus=args.focus, disaster_level=args.level, gamma_pct=args.gamma_pct,
        gamma_region_pct=args.gamma_region_pct, num_trucks=args.trucks,
        drones_per_truck=args.drones_per_truck, range_miles=args.range_miles,
        max_load=args.load, epsilon=args.epsilon, coords_csv=args.coords_csv,
    )
    for key, val in overrides.items():
        setattr(spec, key, val)
    return spec


def cmd_generate(args) -> int:
    try:
        spec = _spec_from_args(args)
        inst = generate(spec)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    report = validate_instance(inst)
    if not report.ok:
        for v in report.violations:
            print(f"invalid instance: {v}", file=sys.stderr)
        return EXIT_INVALID
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "instance.json"
    io.write_instance(inst, path)
    print(path)
    return EXIT_OK


def cmd_solve(args) -> int:
    try:
        inst = io.read_instance(args.instance)
    except FileNotFoundError:
        print(f"error: no such instance file: {args.instance}", file=sys.stderr)
        return EXIT_SCHEMA
    except io.SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    vrep = validate_instance(inst)
    if not vrep.ok:
        for v in vrep.violations:
            print(f"invalid instance: {v}", file=sys.stderr)
        return EXIT_INVALID
    cfg = RunConfig(epsilon=args.epsilon, max_outer=args.max_outer,
                    max_cg_rounds=args.max_cg_rounds, time_limit=args.time_limit,
                    seed=args.seed)
    report = run(inst, cfg)
    record = solution_record(report.solution, len(report.scenarios))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    io.dump_json(io.report_to_dict(report, record), out_dir / "report.json")
    io.dump_json(io.routes_to_dict(record, report.scenarios), out_dir / "routes.json")
    io.dump_json(io.geometry_to_dict(inst, record), out_dir / "routes.geojson")
    m = report.metrics
    print(f"status: {report.status}")
    print(f"bounds: lb={report.lb:.2f} ub={report.ub:.2f}")
    print(f"cost: {m.cost:.2f} scenarios: {m.n_scenarios} "
          f"unfulfilled: {m.unfulfilled_pct:.2f}% avg-delay: {m.avg_delay:.1f} min")
    print(f"files: {out_dir / 'report.json'}")
    return EXIT_OK if report.status == "converged" else EXIT_NOT_CONVERGED


def _experiment_cell(payload):
    """One sweep cell: generate, solve, return the metrics row (worker-safe)."""
    base, solver, seed, drones, range_miles, gamma = payload
    spec = GenSpec(**base)
    spec.seed = seed
    spec.drones_per_truck = drones
    spec.range_miles = range_miles
    spec.gamma_pct = gamma
    inst = generate(spec)
    report = run(inst, RunConfig(**solver))
    m = report.metrics
    return {
        "status": report.status,
        "cpu_seconds": m.cpu_seconds,
        "n_scenarios": m.n_scenarios,
        "cost": m.cost,
        "unfulfilled_pct": m.unfulfilled_pct,
        "avg_delay": m.avg_delay,
    }


def _parse_list(text, cast):
    return [cast(tok) for tok in str(text).split(",") if tok.strip()]


def cmd_experiment(args) -> int:
    drones_list = _parse_list(args.drones_list, int)
    range_list = _parse_list(args.range_list, float)
    gamma_list = _parse_list(args.gamma_list, float)
    base = dict(
        n_communities=args.communities, n_satellites=args.satellites,
        focus=args.focus, disaster_level=args.level,
        gamma_region_pct=args.gamma_region_pct, num_trucks=args.trucks,
        max_load=args.load, epsilon=args.epsilon, coords_csv=args.coords_csv,
    )
    solver = dict(max_outer=args.max_outer, max_cg_rounds=args.max_cg_rounds,
                  time_limit=args.time_limit)
    cells = [(drones, rng_miles, gamma)
             for drones in drones_list for rng_miles in range_list for gamma in gamma_list]
    jobs = []
    for cell in cells:
        for rep in range(args.replications):
            jobs.append((base, solver, args.seed + rep, *cell))

    results: dict[tuple, list] = {cell: [] for cell in cells}
    failures: dict[tuple, list] = {cell: [] for cell in cells}

    def record(job, outcome, error=None):
        cell = job[3:]
        if error is not None:
            failures[cell].append(f"seed {job[2]}: {error}")
            logger.error("cell %s seed %s failed: %s", cell, job[2], error)
        else:
            results[cell].append(outcome)

    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            futures = {pool.submit(_experiment_cell, job): job for job in jobs}
            for fut, job in futures.items():
                try:
                    record(job, fut.result())
                except Exception as exc:
                    record(job, None, error=str(exc))
    else:
        for job in jobs:
            try:
                record(job, _experiment_cell(job))
            except Exception as exc:
                record(job, None, error=str(exc))

    metric_keys = ("cpu_seconds", "n_scenarios", "cost", "unfulfilled_pct", "avg_delay")
    rows = []
    for cell in cells:
        drones, rng_miles, gamma = cell
        row = {
            "communities": args.communities, "gamma_pct": gamma,
            "drones_per_truck": drones, "range_miles": rng_miles,
            "replications": len(results[cell]), "failures": len(failures[cell]),
        }
        for key in metric_keys:
            vals = [r[key] for r in results[cell]]
            row[f"{key}_mean"] = statistics.fmean(vals) if vals else float("nan")
            row[f"{key}_std"] = statistics.pstdev(vals) if len(vals) > 1 else 0.0
        rows.append(row)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "metrics.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)

    header = ("gamma%", "drones", "range", "cost", "unful%", "delay", "#scen", "cpu_s")
    print(" ".join(f"{h:>8}" for h in header))
    for row in rows:
        print(" ".join([
            f"{row['gamma_pct']:>8.0f}", f"{row['drones_per_truck']:>8d}",
            f"{row['range_miles']:>8.0f}", f"{row['cost_mean']:>8.1f}",
            f"{row['unfulfilled_pct_mean']:>8.2f}", f"{row['avg_delay_mean']:>8.1f}",
            f"{row['n_scenarios_mean']:>8.2f}", f"{row['cpu_seconds_mean']:>8.1f}",
        ]))
    print(path)
    return EXIT_OK if not any(failures.values()) else EXIT_NOT_CONVERGED


def cmd_reevaluate(args) -> int:
    try:
        inst = io.read_instance(args.instance)
        report = io.read_report(args.report)
    except (FileNotFoundError, io.SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    scenarios = io.scenarios_from_report(report)
    for k, sc in enumerate(scenarios):
        expected = make_scenario(inst, sc.deviated, tag=sc.tag)
        if any(abs(a - b) > 1e-6 for a, b in zip(expected.demands, sc.demands)):
            print(f"FAIL scenario {k}: stored demands disagree with deviation flags")
            return EXIT_INVALID
    result = check_solution(inst, scenarios, report["solution"])
    for v in result.violations:
        print(f"FAIL {v}")
    reported = report["metrics"]["cost"]
    print(f"recomputed cost: {result.cost:.4f} (reported {reported:.4f})")
    print(f"unfulfilled: {result.unfulfilled_pct:.3f}%  avg delay: {result.avg_delay:.2f} min")
    if result.violations:
        return EXIT_INVALID
    if abs(result.cost - reported) > 1e-4:
        print("FAIL reported metrics cost differs from recomputation")
        return EXIT_INVALID
    print("PASS all constraints and cost terms verified")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="droneaid",
        description="Robust truck-and-drone aid delivery planning",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthesize an instance file")
    _gen_flags(g)
    _add(g, "out-dir", type=str, default=".", help="output directory")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="solve an instance file")
    _add(s, "instance", type=str, required=True, help="instance JSON path")
    _add(s, "seed", type=int, default=0, help="echoed into the run config")
    _add(s, "epsilon", type=float, default=None, help="$ tolerance (default: instance value)")
    _solver_flags(s)
    _add(s, "out-dir", type=str, default=".", help="output directory")
    s.add_argument("--verbose", action="store_true", help="log each outer iteration")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("experiment", help="factorial sweep with replications")
    _gen_flags(e)
    _solver_flags(e)
    _add(e, "drones-list", type=str, default="4,6,8", help="comma-separated drones-per-truck sweep")
    _add(e, "range-list", type=str, default="35", help="comma-separated range sweep, miles")
    _add(e, "gamma-list", type=str, default="30,50,70", help="comma-separated budget sweep, %%")
    _add(e, "replications", type=int, default=5, help="instances per cell")
    _add(e, "workers", type=int, default=1, help="parallel worker processes")
    _add(e, "out-dir", type=str, default=".", help="output directory")
    e.set_defaults(func=cmd_experiment)

    r = sub.add_parser("reevaluate", help="verify a solve's output without the LP engine")
    _add(r, "instance", type=str, required=True, help="instance JSON path")
    _add(r, "report", type=str, required=True, help="report JSON path")
    r.set_defaults(func=cmd_reevaluate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "verbose", False):
        logging.basicConfig(level=logging.INFO, format="%(name)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
