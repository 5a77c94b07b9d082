"""Receding-horizon CE tracking of the nominal tip-pose path.

Each control step optimizes the continuous inputs (db_x, dg_y) over a
short window, warm-started at the nominal controls with a re-initialized
diagonal covariance, and executes only the first input. Bevel flips are
not decided here; they belong to the bang-bang controller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from . import ce, sim
from .errors import FeedbackError, TrackerError, SolverError
from .planner import NominalTrajectory, INFEASIBLE_COST
from .sim import ControlInput, SimState


@dataclass(frozen=True)
class SE2Weight:
    w_x: float = 1.0  # 1/mm^2
    w_y: float = 1.0  # 1/mm^2
    w_theta: float = 400.0  # 1/rad^2


def wrap_angle(theta: float) -> float:
    """Map an angle to (-pi, pi]."""
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


def se2_deviation(g: Sequence[float], g_ref: Sequence[float], w: SE2Weight) -> float:
    """Weighted squared SE(2) deviation with a wrapped angular term."""
    dx = g[0] - g_ref[0]
    dy = g[1] - g_ref[1]
    dth = wrap_angle(g[2] - g_ref[2])
    return w.w_x * dx * dx + w.w_y * dy * dy + w.w_theta * dth * dth


def tracking_cost(poses: np.ndarray, nominal_poses: np.ndarray, w: SE2Weight,
                  dt: float) -> float:
    """Cumulative SE(2) deviation over the window, scaled by dt."""
    poses = np.asarray(poses, dtype=float)
    nominal_poses = np.asarray(nominal_poses, dtype=float)
    if poses.shape != nominal_poses.shape:
        raise ValueError("pose sequences must have equal length")
    total = 0.0
    for g, g_ref in zip(poses, nominal_poses):
        total += se2_deviation(g, g_ref, w)
    return total * dt


def track_step(
    model_state: SimState,
    nominal: NominalTrajectory,
    s0: int,
    window: int,
    weight: SE2Weight,
    ce_params: ce.CEParams,
    sigma_reinit: Tuple[float, float] = (0.2, 0.3),
    *,
    entry_theta_boost: float = 10.0,
    entry_band: float = 5.0,
    target: Optional[Tuple[float, float]] = None,
    target_weight: float = 0.0,
    map_fn=map,
) -> ControlInput:
    """One receding-horizon update; returns the first control of the best
    candidate window — the nominal window or the best CE sample, whichever
    tracks better (flip always -1: flips are not the MPC's job).

    Window rollouts reuse the nominal flip schedule. Tip orientation gets
    ``entry_theta_boost`` extra weight while the tip is still within
    ``entry_band`` mm of the skin plane, where the entry angle dominates
    long-term behavior. When the window reaches the end of the nominal
    horizon and a ``target`` is given, a terminal cost
    ``target_weight * ||tip_end - target||^2`` is added, so the final
    approach aims at the target itself rather than inheriting the
    nominal plan's residual miss.
    """
    m = nominal.horizon
    if not (0 <= s0 < m):
        raise TrackerError(f"window start {s0} outside the nominal horizon {m}")
    m_eff = min(window, m - s0)
    cfg = model_state.config
    dt = nominal.dt

    if sim.tip_pose(model_state)[0] <= cfg.skin_x + entry_band:
        weight = SE2Weight(weight.w_x, weight.w_y, weight.w_theta * entry_theta_boost)

    window_controls = nominal.controls[s0 : s0 + m_eff]
    nominal_poses = nominal.tip_poses[s0 : s0 + m_eff + 1]
    mean = np.empty(2 * m_eff)
    mean[0::2] = [c.db_x for c in window_controls]
    mean[1::2] = [c.dg_y for c in window_controls]
    var = np.empty(2 * m_eff)
    var[0::2] = sigma_reinit[0] ** 2
    var[1::2] = sigma_reinit[1] ** 2
    init = ce.CEDistribution(mean=mean, cov=np.diag(var))

    def objective(z: np.ndarray) -> float:
        state = model_state
        poses = [sim.tip_pose(state)]
        try:
            for i in range(m_eff):
                db = float(np.clip(z[2 * i], 0.0, cfg.db_x_max))
                dg = float(np.clip(z[2 * i + 1], -cfg.dg_y_max, cfg.dg_y_max))
                state = sim.step(state, ControlInput(db, dg, window_controls[i].flip))
                poses.append(sim.tip_pose(state))
        except (SolverError, ValueError):
            return INFEASIBLE_COST
        cost = tracking_cost(np.array(poses), nominal_poses, weight, dt)
        if target is not None and s0 + m_eff == m:
            ex = poses[-1][0] - target[0]
            ey = poses[-1][1] - target[1]
            cost += target_weight * (ex * ex + ey * ey)
        return cost

    result = ce.optimize(objective, init, ce_params, map_fn=map_fn)
    # the nominal window itself competes with the sampled candidates, so
    # the tracker does not inject sampling noise when already on track
    best, best_cost = result.best, result.best_cost
    nominal_cost = objective(mean)
    if nominal_cost <= best_cost:
        best, best_cost = mean, nominal_cost
    if best_cost >= INFEASIBLE_COST:
        raise TrackerError("all tracking rollouts were infeasible")
    db = float(np.clip(best[0], 0.0, cfg.db_x_max))
    dg = float(np.clip(best[1], -cfg.dg_y_max, cfg.dg_y_max))
    return ControlInput(db, dg, -1)


def apply_feedback(state: SimState, measured_tip: Tuple[float, float],
                   max_jump: float = 25.0) -> SimState:
    """Re-register the internal model so its tip matches the measurement.

    The measured tip position acts as an essential constraint with the
    model's frame as the released degree of freedom: the boundary values
    (base clamp, guide) and the contact channel are shifted rigidly so the
    constrained configuration is itself an equilibrium, then the
    constraint is dropped for prediction.
    """
    mx, my = float(measured_tip[0]), float(measured_tip[1])
    if not (math.isfinite(mx) and math.isfinite(my)):
        raise FeedbackError("non-finite tip measurement")
    tx, ty, _ = sim.tip_pose(state)
    dx, dy = mx - tx, my - ty
    if abs(dx) > max_jump or abs(dy) > max_jump:
        raise FeedbackError(
            f"measurement ({mx:.1f}, {my:.1f}) too far from model tip "
            f"({tx:.1f}, {ty:.1f})"
        )
    out = state.clone()
    out.base_x += dx
    out.c_x = out.c_x + dx
    out.d = out.d.copy()
    out.d[0::2] += dy
    out.clamp_y += dy
    out.guide_y += dy
    out.c_anchor = out.c_anchor + dy
    if dx != 0.0:
        # the guide is world-fixed, so an axial re-registration moves its
        # material point; re-equilibrate under the shifted frame
        try:
            sim._equilibrate(out)
        except SolverError as exc:
            raise FeedbackError(f"feedback re-solve diverged: {exc}") from exc
    return out
