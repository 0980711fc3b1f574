"""Command-line entry point: ``sndh {gen,bundle,solve,experiment}``.

Log verbosity follows the SNDH_LOG environment variable (DEBUG, INFO, ...).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import milp
from .bundling import bundle_scenarios, dump_bundles, load_bundles, overlap_stats
from .experiment import ExperimentConfig, all_cells_complete, relative_difference, run_experiment, sub_seed
from .formulation import build_extensive_form
from .network import generate_instance, load_instance, save_instance
from .pha import PAPER_RHO_GRID, PhaConfig, pha_run, penalty_sweep, write_trace
from .scenarios import generate_scenario_set, load_scenarios, save_scenarios

log = logging.getLogger("sndh")

EXTENSIVE_MAX_COLUMNS = 20_000


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def cmd_gen(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    inst = generate_instance(args.terminals, args.horizon, args.commodities, seed=sub_seed(args.seed, 0))
    save_instance(inst, out / "instance.json")
    for n in args.scenarios:
        save_scenarios(generate_scenario_set(inst, n, seed=sub_seed(args.seed, 1, n)), out / f"scenarios_{n}.json")
    log.info("wrote instance and %d scenario files to %s", len(args.scenarios), out)
    return 0


def cmd_bundle(args: argparse.Namespace) -> int:
    scens = load_scenarios(args.scenarios)
    if args.bundles > len(scens):
        print(f"error: {args.bundles} bundles requested for {len(scens)} scenarios", file=sys.stderr)
        return 2
    bundles, part, cfg = bundle_scenarios(scens, args.method, args.bundles, exponent=args.exponent,
                                          score_threshold=args.gamma, interval_param=args.eta, seed=args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(dump_bundles(bundles, args.method, cfg, part))
    stats = overlap_stats(bundles, len(scens))
    with open(out.with_suffix(".csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bundle", "size", "bundle_prob"])
        for b, size in enumerate(stats.bundle_sizes):
            w.writerow([b, size, f"{bundles.bundle_prob[b]:.12g}"])
        w.writerow([])
        w.writerow(["repeated_scenarios", stats.repeated_count])
        w.writerow(["occurrences", "scenarios"])
        for k, count in sorted(zip(*np.unique(stats.occurrences, return_counts=True))):
            w.writerow([int(k), int(count)])
    print(f"{len(bundles.bundles)} bundles, sizes {stats.bundle_sizes}, repeated {stats.repeated_count}")
    return 0


def cmd_solve(args: argparse.Namespace) -> int:
    inst = load_instance(args.instance)
    scens = load_scenarios(args.scenarios)
    start = time.perf_counter()
    if args.extensive:
        lp, idx = build_extensive_form(inst, scens)
        if lp.num_vars > args.max_columns:
            print(f"error: extensive form has {lp.num_vars} columns, above the guard of {args.max_columns}",
                  file=sys.stderr)
            return 2
        sol = milp.solve(lp, rel_gap=args.mip_gap, time_limit=args.max_seconds, engine=args.engine)
        if not sol.has_solution:
            print(f"error: extensive solve ended with status {sol.status.value}", file=sys.stderr)
            return 1
        design = sol.primal[idx.design].round()
        report = {"mode": "extensive", "status": sol.status.value, "objective": sol.objective,
                  "gap": sol.gap, "nodes": sol.nodes_explored, "converged": sol.status == milp.Status.OPTIMAL}
    else:
        if args.bundles is None:
            print("error: --bundles is required unless --extensive is given", file=sys.stderr)
            return 2
        bundles, _ = load_bundles(args.bundles, scens)
        cfg = PhaConfig(penalty=args.rho, tolerance=args.tolerance, max_seconds=args.max_seconds,
                        max_iterations=args.max_iterations, subproblem_gap=args.mip_gap, engine=args.engine)
        if args.rho_grid:
            result, _ = penalty_sweep(inst, scens, bundles, args.rho_grid, cfg)
        else:
            result = pha_run(inst, scens, bundles, cfg)
        design = result.design
        report = {"mode": "pha", "objective": result.objective, "iterations": result.iterations,
                  "converged": result.converged, "timed_out": result.timed_out, "penalty": result.penalty,
                  "repaired": result.repaired}
        if args.trace:
            write_trace(result, args.trace)
    report["seconds"] = time.perf_counter() - start
    report["design"] = design.astype(int).tolist()
    if args.reference is not None:
        report["reference"] = args.reference
        report["rel_diff_pct"] = relative_difference(report["objective"], args.reference)
    text = json.dumps(report, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    print(f"objective {report['objective']:.6g} ({report['mode']}, {report['seconds']:.1f}s)")
    return 0


def cmd_experiment(args: argparse.Namespace) -> int:
    base = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    overrides = {
        "out_dir": args.out, "seed": args.seed, "instance": args.instance, "terminals": args.terminals,
        "horizon": args.horizon, "commodities": args.commodities, "scenario_counts": args.scenarios,
        "exponents": args.exponent, "num_bundles": args.bundles, "gamma": args.gamma, "eta": args.eta,
        "rho_grid": args.rho_grid, "tolerance": args.tolerance, "max_seconds": args.max_seconds,
        "mip_gap": args.mip_gap, "parallel": args.parallel, "engine": args.engine,
    }
    fields = {**asdict(base), **{k: v for k, v in overrides.items() if v is not None}}
    if args.no_kmeans:
        fields["include_kmeans"] = False
    cfg = ExperimentConfig(**fields)
    rows = run_experiment(cfg)
    for r in rows:
        obj = r.get("objective")
        print(f"{r['scenarios']:>4} {r['method']:<7} {str(r['exponent']):<5} "
              f"{'-' if obj is None else f'{obj:.4f}'} {r['status']}")
    return 0 if all_cells_complete(rows) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sndh", description="Scenario bundling and progressive hedging for "
                                                        "stochastic service network design")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate an instance and scenario files")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--terminals", type=int, default=12)
    g.add_argument("--horizon", type=int, default=5)
    g.add_argument("--commodities", type=int, default=6)
    g.add_argument("--scenarios", type=_ints, default=[48, 100, 150], help="comma-separated counts")
    g.add_argument("--out", default=".")
    g.set_defaults(func=cmd_gen)

    b = sub.add_parser("bundle", help="bundle a scenario file")
    b.add_argument("--scenarios", required=True)
    b.add_argument("--method", choices=["fcm", "kmeans"], default="fcm")
    b.add_argument("--bundles", type=int, default=5)
    b.add_argument("--exponent", type=float, default=2.0)
    b.add_argument("--gamma", type=float, default=0.8)
    b.add_argument("--eta", type=float, default=0.95)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", default="bundles.json")
    b.set_defaults(func=cmd_bundle)

    s = sub.add_parser("solve", help="run PHA over bundles, or solve the extensive form")
    s.add_argument("--instance", required=True)
    s.add_argument("--scenarios", required=True)
    s.add_argument("--bundles")
    s.add_argument("--rho", type=float, default=1.0)
    s.add_argument("--rho-grid", type=_floats, default=None,
                   help=f"comma-separated penalties to sweep, e.g. {','.join(map(str, PAPER_RHO_GRID))}")
    s.add_argument("--tolerance", type=float, default=1e-5)
    s.add_argument("--max-seconds", type=float, default=3 * 3600.0)
    s.add_argument("--max-iterations", type=int, default=500)
    s.add_argument("--mip-gap", type=float, default=0.05)
    s.add_argument("--engine", choices=milp.ENGINES, default="auto")
    s.add_argument("--extensive", action="store_true")
    s.add_argument("--max-columns", type=int, default=EXTENSIVE_MAX_COLUMNS, help="size guard for --extensive")
    s.add_argument("--reference", type=float, default=None, help="objective to report the relative difference to")
    s.add_argument("--trace", default=None, help="CSV path for the per-iteration trace")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("experiment", help="compare k-means and FCM bundling end to end")
    e.add_argument("--config", default=None, help="JSON file with ExperimentConfig fields")
    e.add_argument("--out", default=None)
    e.add_argument("--seed", type=int, default=None)
    e.add_argument("--instance", default=None)
    e.add_argument("--terminals", type=int, default=None)
    e.add_argument("--horizon", type=int, default=None)
    e.add_argument("--commodities", type=int, default=None)
    e.add_argument("--scenarios", type=_ints, default=None)
    e.add_argument("--exponent", type=_floats, default=None, help="comma-separated FCM exponents")
    e.add_argument("--bundles", type=int, default=None)
    e.add_argument("--gamma", type=float, default=None)
    e.add_argument("--eta", type=float, default=None)
    e.add_argument("--rho-grid", type=_floats, default=None)
    e.add_argument("--tolerance", type=float, default=None)
    e.add_argument("--max-seconds", type=float, default=None, help="PHA budget per penalty value")
    e.add_argument("--mip-gap", type=float, default=None)
    e.add_argument("--engine", choices=milp.ENGINES, default=None)
    e.add_argument("--parallel", type=int, default=None, help="run this many cells concurrently")
    e.add_argument("--no-kmeans", action="store_true")
    e.set_defaults(func=cmd_experiment)
    return p


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("SNDH_LOG", "WARNING").upper(),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
