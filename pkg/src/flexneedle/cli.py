"""Command-line harness.

Subcommands
    plan      offline CE trajectory planning for one target
    track     closed-loop MPC replay against the nominal plan (no plant
              perturbation, no sensor noise; sanity/regression use)
    run       one full closed-loop insertion on the perturbed plant
    campaign  all scenario targets x repetitions, CSV report
    em-eval   grid-dataset error statistics from a CSV
    em-synth  synthesize a sensor grid dataset to CSV
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import em, harness, io, planner, scenario as scen
from .errors import FlexNeedleError
from .io import fmt


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flexneedle",
        description="Planar flexible-needle insertion: simulation, planning, "
                    "closed-loop control, and EM sensor evaluation.",
    )
    parser.add_argument("--scenario", type=Path, default=None,
                        help="scenario TOML file (default: bundled phantom)")
    parser.add_argument("--seed", type=int, default=0, help="master RNG seed")
    parser.add_argument("--out", type=Path, default=None,
                        help="output file or directory (command-dependent)")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker processes for campaign runs")
    sub = parser.add_subparsers(dest="command", required=True)

    p_plan = sub.add_parser("plan", help="plan a nominal trajectory")
    p_plan.add_argument("--depth", type=float, required=True,
                        help="target depth below the skin plane, mm")
    p_plan.add_argument("--lateral", type=float, default=0.0,
                        help="target lateral offset, mm")

    p_track = sub.add_parser("track", help="closed-loop MPC replay of a plan")
    p_track.add_argument("--plan-csv", type=Path, required=True,
                         help="trajectory CSV produced by 'plan'")
    p_track.add_argument("--depth", type=float, required=True)
    p_track.add_argument("--lateral", type=float, default=0.0)

    p_run = sub.add_parser("run", help="one closed-loop insertion")
    p_run.add_argument("--depth", type=float, required=True)
    p_run.add_argument("--lateral", type=float, default=0.0)

    sub.add_parser("campaign", help="full target-grid campaign")

    p_eval = sub.add_parser("em-eval", help="evaluate a sensor grid CSV")
    p_eval.add_argument("--grid-csv", type=Path, required=True)
    p_eval.add_argument("--percentile", type=float, default=95.0,
                        help="indicator percentile for threshold selection")

    p_synth = sub.add_parser("em-synth", help="synthesize a sensor grid CSV")
    p_synth.add_argument("--indicator", type=float, default=None,
                         help="override the scenario indicator value")
    p_synth.add_argument("--grid-n", type=int, default=25,
                         help="number of grid points")
    p_synth.add_argument("--samples", type=int, default=30,
                         help="samples per grid point")
    p_synth.add_argument("--extent", type=float, default=200.0,
                         help="cubic grid edge length, mm")
    return parser


def _load_scenario(args) -> scen.Scenario:
    if args.scenario is not None:
        return scen.parse_scenario(args.scenario)
    return scen.load_default_scenario()


def _target(scenario: scen.Scenario, depth: float, lateral: float):
    return (scenario.sim_config.skin_x + depth, lateral)


def cmd_plan(args) -> int:
    scenario = _load_scenario(args)
    target = _target(scenario, args.depth, args.lateral)
    nominal = harness.plan_for_target(scenario, target, args.seed)
    out = args.out or Path("plan.csv")
    io.write_trajectory_csv(out, nominal)
    tx, ty, _ = nominal.tip_poses[-1]
    err = np.hypot(tx - target[0], ty - target[1])
    print(f"plan: {nominal.horizon} steps, final tip ({fmt(tx)}, {fmt(ty)}) mm, "
          f"target miss {fmt(err)} mm, cost {fmt(nominal.total_cost)}")
    print(f"wrote {out}")
    return 0


def cmd_track(args) -> int:
    """MPC tracking of a stored plan on an unperturbed plant without sensor
    noise; with an exact model this should reproduce the plan closely."""
    from dataclasses import replace as _replace
    scenario = _load_scenario(args)
    scenario = _replace(
        scenario,
        perturbation=scen.PlantPerturbation(0.0, 0.0, 1.0),
        sensor=_replace(scenario.sensor, enabled=False),
    )
    target = _target(scenario, args.depth, args.lateral)
    nominal = io.read_trajectory_csv(args.plan_csv, scenario.sim_config,
                                     scenario.plan.dt)
    result = harness.run_insertion(scenario, target, args.seed, nominal=nominal)
    out = args.out or Path("track.csv")
    harness.write_insertion_csv(out, result)
    print(f"track: tip ({fmt(result.plant_tip[0])}, {fmt(result.plant_tip[1])}) mm, "
          f"target miss {fmt(result.targeting_error)} mm, "
          f"{result.flip_count} flips")
    print(f"wrote {out}")
    return 0


def cmd_run(args) -> int:
    scenario = _load_scenario(args)
    target = _target(scenario, args.depth, args.lateral)
    result = harness.run_insertion(scenario, target, args.seed)
    out = args.out or Path("run.csv")
    harness.write_insertion_csv(out, result)
    print(f"run: tip ({fmt(result.plant_tip[0])}, {fmt(result.plant_tip[1])}) mm, "
          f"target miss {fmt(result.targeting_error)} mm, "
          f"{result.flip_count} flips, guide travel {fmt(result.guide_travel)} mm")
    print(f"wrote {out}")
    return 0


def cmd_campaign(args) -> int:
    scenario = _load_scenario(args)
    out = args.out or Path("campaign")
    summary = harness.run_campaign(
        scenario, args.seed, threads=args.threads,
        progress=lambda msg: print(msg, file=sys.stderr),
    )
    harness.write_campaign(summary, out, scenario_path=args.scenario)
    n_failed = sum(1 for r in summary.runs if r.result is None)
    print(f"campaign: {len(summary.runs)} runs ({n_failed} failed), "
          f"targeting error {fmt(summary.mean_error)} +/- {fmt(summary.sd_error)} mm")
    print(f"wrote {out}/runs.csv and {out}/summary.csv")
    return 0


def cmd_em_eval(args) -> int:
    dataset = io.read_grid_csv(args.grid_csv)
    report = em.evaluate_grid(dataset)
    thr = em.indicator_threshold(dataset.indicators.ravel(), args.percentile)
    print(f"em-eval: {dataset.true_pos.shape[0]} points, "
          f"rmse {fmt(report.rmse)} mm, jitter {fmt(report.jitter)} mm, "
          f"indicator p{args.percentile:g} {fmt(thr)}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            import csv as _csv
            writer = _csv.writer(fh)
            writer.writerow(["point_id", "error_mm"])
            for i, e in enumerate(report.errors):
                writer.writerow([i, fmt(e)])
        print(f"wrote {args.out}")
    return 0


def cmd_em_synth(args) -> int:
    scenario = _load_scenario(args)
    model = harness.make_sensor(scenario, args.seed)
    if args.indicator is not None:
        model.indicator = args.indicator
    model.validate()
    rng = np.random.default_rng(args.seed)
    true_pos = rng.uniform(0.0, args.extent, size=(args.grid_n, 3))
    dataset = em.synth_grid(model, true_pos, args.samples)
    out = args.out or Path("grid.csv")
    io.write_grid_csv(out, dataset)
    report = em.evaluate_grid(dataset)
    print(f"em-synth: {args.grid_n} points x {args.samples} samples, "
          f"indicator {fmt(model.indicator)}, rmse {fmt(report.rmse)} mm")
    print(f"wrote {out}")
    return 0


_COMMANDS = {
    "plan": cmd_plan,
    "track": cmd_track,
    "run": cmd_run,
    "campaign": cmd_campaign,
    "em-eval": cmd_em_eval,
    "em-synth": cmd_em_synth,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except FlexNeedleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
