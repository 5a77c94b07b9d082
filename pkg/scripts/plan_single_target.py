#!/usr/bin/env python3
"""Plan one insertion trajectory and print the control schedule.

Usage: python scripts/plan_single_target.py [depth_mm] [lateral_mm] [seed]
"""

import sys

import numpy as np

from flexneedle import harness, io, scenario as scen, sim


def main() -> int:
    depth = float(sys.argv[1]) if len(sys.argv) > 1 else 40.0
    lateral = float(sys.argv[2]) if len(sys.argv) > 2 else 5.0
    seed = int(sys.argv[3]) if len(sys.argv) > 3 else 0
    scenario = scen.load_default_scenario()
    target = (scenario.sim_config.skin_x + depth, lateral)
    nominal = harness.plan_for_target(scenario, target, seed)
    tx, ty, th = nominal.tip_poses[-1]
    miss = np.hypot(tx - target[0], ty - target[1])
    flips = sum(1 for c in nominal.controls if c.flip == 1)
    travel = sum(abs(c.dg_y) for c in nominal.controls)
    print(f"target ({target[0]}, {target[1]}) mm: miss {miss:.3f} mm, "
          f"{flips} flips, guide travel {travel:.1f} mm, "
          f"final strain energy {sim.strain_energy(nominal.states[-1]):.1f}")
    io.write_trajectory_csv("plan.csv", nominal)
    print("wrote plan.csv")
    return 0


if __name__ == "__main__":
    sys.exit(main())
