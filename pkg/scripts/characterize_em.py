#!/usr/bin/env python3
"""EM sensor characterization replay: synthesize grid datasets across
indicator values, evaluate RMSE/jitter, and refit the piecewise
error-indicator relation.

Usage: python scripts/characterize_em.py [seed]
"""

import sys

import numpy as np

from flexneedle import em


def main() -> int:
    seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
    rng = np.random.default_rng(seed)
    grid = rng.uniform(0.0, 200.0, size=(125, 3))

    print("indicator   rmse[mm]   jitter[mm]")
    indicators, errors = [], []
    for i, ind in enumerate(np.concatenate([
            rng.uniform(0.0, 0.0547, 8), rng.uniform(0.06, 1.0, 8)])):
        model = em.SensorModel(indicator=float(ind), seed=seed + i + 1)
        ds = em.synth_grid(model, grid[:25], 40)
        report = em.evaluate_grid(ds)
        print(f"{ind:9.4f}  {report.rmse:9.3f}  {report.jitter:9.3f}")
        indicators.extend([ind] * len(report.errors))
        errors.extend(report.errors)

    fit = em.fit_error_indicator(indicators, errors, em.INDICATOR_THRESHOLD)
    print(f"\npiecewise fit: ideal {fit.ideal_mean:.3f} +/- {fit.ideal_sd:.3f} mm, "
          f"noisy err = {fit.slope:.3f} * I + {fit.intercept:.3f} mm")
    print(f"reference:     ideal {em.IDEAL_ERR_MEAN} +/- {em.IDEAL_ERR_SD} mm, "
          f"noisy err = {em.NOISY_SLOPE} * I + {em.NOISY_INTERCEPT} mm")
    return 0


if __name__ == "__main__":
    sys.exit(main())
