"""Kinematic bang-bang bevel-direction controller.

Rolls out two constant-curvature unicycle trajectories from the current
tip pose (keep the bevel vs. flip it) to the target's remaining depth and
keeps whichever ends closer to the target. A hysteresis threshold on the
distance improvement suppresses rapid back-and-forth flips.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple


@dataclass(frozen=True)
class KinematicParams:
    curvature: float = 0.005  # 1/mm
    sub_step: float = 0.5  # mm
    flip_hysteresis: float = 0.05  # mm

    def validate(self) -> None:
        if self.curvature <= 0.0:
            raise ValueError("curvature must be positive")
        if self.sub_step <= 0.0:
            raise ValueError("sub_step must be positive")
        if self.flip_hysteresis < 0.0:
            raise ValueError("flip_hysteresis must be >= 0")


def rollout_kinematic(
    tip: Tuple[float, float, float],
    sgn: int,
    params: KinematicParams,
    total_advance: float,
) -> Tuple[float, float]:
    """Iterate the discrete unicycle update over ``total_advance`` and return
    the final (x, y). Heading is updated after each translation sub-step,
    so the first sub-step moves along the initial heading."""
    if total_advance < 0.0:
        raise ValueError("total_advance must be >= 0")
    x, y, th = tip
    remaining = total_advance
    u = params.sub_step
    while remaining > 1e-12:
        du = min(u, remaining)
        x += math.cos(th) * du
        y += math.sin(th) * du
        th += sgn * params.curvature * du
        remaining -= du
    return x, y


def decide_flip(
    tip: Tuple[float, float, float],
    bvl: int,
    target: Tuple[float, float],
    params: KinematicParams,
    lookahead_advance: float,
) -> int:
    """+1 to toggle the bevel, -1 to keep it.

    Toggles only when the opposite-curvature rollout lands closer to the
    target by more than the hysteresis threshold; ties keep the current
    direction.
    """
    if lookahead_advance <= 0.0:
        raise ValueError("lookahead_advance must be positive")
    keep_end = rollout_kinematic(tip, bvl, params, lookahead_advance)
    swap_end = rollout_kinematic(tip, -bvl, params, lookahead_advance)
    d_keep = math.hypot(keep_end[0] - target[0], keep_end[1] - target[1])
    d_swap = math.hypot(swap_end[0] - target[0], swap_end[1] - target[1])
    if d_swap < d_keep - params.flip_hysteresis:
        return 1
    return -1
