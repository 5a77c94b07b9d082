#!/usr/bin/env python3
"""Full two-layer-phantom campaign (15 targets x 10 reps) with CSV report.

Usage: python scripts/run_phantom_campaign.py [out_dir] [master_seed]
"""

import sys
import time
from pathlib import Path

from flexneedle import harness, scenario as scen


def main() -> int:
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("campaign_out")
    seed = int(sys.argv[2]) if len(sys.argv) > 2 else 0
    scenario = scen.load_default_scenario()
    t0 = time.time()
    summary = harness.run_campaign(scenario, seed,
                                   progress=lambda m: print(m, flush=True))
    harness.write_campaign(summary, out)
    wins = (summary.errors < summary.open_loop_errors).mean()
    print(f"done in {time.time() - t0:.0f}s")
    print(f"targeting error {summary.mean_error:.3f} +/- {summary.sd_error:.3f} mm")
    print(f"open-loop error {summary.open_loop_errors.mean():.3f} mm, "
          f"closed beats open on {100 * wins:.0f}% of runs")
    print(f"report in {out}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
