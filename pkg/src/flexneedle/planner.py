"""Offline cross-entropy planning of minimally invasive insertion trajectories.

A control primitive z stacks the per-step controls (db_x, dg_y, eps)
where eps is the continuous surrogate for the binary bevel flip
(flip = sign(eps), eps = 0 decoding to "no toggle"). The planning cost is
the sum of quadratic step costs, gated by a Heaviside on tissue contact,
plus a final cost weighing targeting error against tissue strain energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import ce, sim
from .errors import PlanningError, SolverError
from .sim import ControlInput, SimConfig, SimState

INFEASIBLE_COST = 1e9


@dataclass(frozen=True)
class PlanWeights:
    q_deflection: float = 1e-3  # per mm^2, nodal lateral deviation penalty
    r_guide: float = 1.0  # per mm^2 of guide translation
    r_flip: float = 0.1  # on the flip surrogate eps^2
    gamma_target: float = 10.0  # 1/mm
    gamma_energy: float = 1e-3  # per (J/m^3)


@dataclass
class NominalTrajectory:
    """Planned control sequence with the states it produces on replay."""

    config: SimConfig
    controls: List[ControlInput]
    tip_poses: np.ndarray  # (m+1, 3)
    states: Optional[List[SimState]] = None
    primitive: Optional[np.ndarray] = None
    total_cost: Optional[float] = None
    final_cost: Optional[float] = None
    target: Optional[Tuple[float, float]] = None
    dt: float = 0.1
    steering: bool = False

    @property
    def horizon(self) -> int:
        return len(self.controls)


def step_cost(state: SimState, inp: ControlInput, weights: PlanWeights,
              dt: float, flip_surrogate: Optional[float] = None) -> float:
    """Quadratic step cost, zero until the needle touches tissue."""
    if not sim.in_tissue(state):
        return 0.0
    eps = flip_surrogate if flip_surrogate is not None \
        else (1.0 if inp.flip == 1 else 0.0)
    v = state.d[0::2] - state.clamp_y
    quad = weights.q_deflection * float(v @ v)
    quad += weights.r_guide * inp.dg_y**2 + weights.r_flip * eps**2
    return quad * dt


def final_cost(state: SimState, target: Tuple[float, float],
               weights: PlanWeights) -> float:
    """gamma1 * ||tip - target|| + gamma2 * strain energy."""
    tx, ty, _ = sim.tip_pose(state)
    dist = math.hypot(tx - target[0], ty - target[1])
    return weights.gamma_target * dist + weights.gamma_energy * sim.strain_energy(state)


def decode_primitive(z: np.ndarray, config: SimConfig,
                     steering: bool = False) -> List[ControlInput]:
    """Clamp a flat primitive vector to actuator limits and binarize flips."""
    z = np.asarray(z, dtype=float).reshape(-1, 3)
    controls = []
    for db, dg, eps in z:
        db = float(np.clip(db, 0.0, config.db_x_max))
        dg = 0.0 if steering else float(np.clip(dg, -config.dg_y_max, config.dg_y_max))
        controls.append(ControlInput(db, dg, 1 if eps > 0.0 else -1))
    return controls


def rollout_cost(
    state0: SimState,
    z: np.ndarray,
    target: Tuple[float, float],
    weights: PlanWeights,
    dt: float,
    steering: bool = False,
    record: bool = False,
):
    """Total planning cost of a primitive; optionally record the replay."""
    config = state0.config
    controls = decode_primitive(z, config, steering)
    eps = np.asarray(z, dtype=float).reshape(-1, 3)[:, 2]
    state = state0
    states = [state] if record else None
    cost = 0.0
    for inp, e in zip(controls, eps):
        state = sim.step(state, inp)
        cost += step_cost(state, inp, weights, dt, flip_surrogate=float(e))
        if record:
            states.append(state)
    fc = final_cost(state, target, weights)
    cost += fc
    if record:
        poses = np.array([sim.tip_pose(s) for s in states])
        return cost, fc, controls, states, poses
    return cost


def _initial_distribution(
    state0: SimState,
    target_x: float,
    horizon: int,
    sigma_db: float,
    sigma_dg: float,
    sigma_eps: float,
    eps_mean: float,
) -> ce.CEDistribution:
    tip_x0 = sim.tip_pose(state0)[0]
    db_mean = max(0.0, (target_x - tip_x0) / horizon)
    mean = np.tile([db_mean, 0.0, eps_mean], horizon)
    var = np.tile([sigma_db**2, sigma_dg**2, sigma_eps**2], horizon)
    return ce.CEDistribution(mean=mean, cov=np.diag(var))


def plan(
    config: SimConfig,
    target: Tuple[float, float],
    weights: PlanWeights,
    horizon: int,
    dt: float,
    ce_params: ce.CEParams,
    *,
    steering: bool = False,
    sigma_db: float = 0.05,
    sigma_dg: float = 0.25,
    sigma_eps: float = 0.5,
    eps_mean: float = -0.5,
    map_fn=map,
) -> NominalTrajectory:
    """CE search for a nominal trajectory reaching ``target`` (world mm)."""
    state0 = sim.new_simulation(config)
    if not (config.skin_x < target[0] <= config.tissue_x_max):
        raise PlanningError(f"target depth {target[0]} outside the tissue region")
    total_advance = target[0] - sim.tip_pose(state0)[0]
    if total_advance > horizon * config.db_x_max:
        raise PlanningError("target deeper than the insertion budget allows")

    init = _initial_distribution(
        state0, target[0], horizon,
        sigma_db, 0.0 if steering else sigma_dg, sigma_eps, eps_mean,
    )

    def objective(z: np.ndarray) -> float:
        try:
            return rollout_cost(state0, z, target, weights, dt, steering)
        except (SolverError, ValueError):
            return INFEASIBLE_COST

    result = ce.optimize(objective, init, ce_params, map_fn=map_fn)
    if result.best_cost >= INFEASIBLE_COST:
        raise PlanningError(
            f"no feasible rollout found in {result.n_iters} CE iterations"
        )
    total, fc, controls, states, poses = rollout_cost(
        state0, result.best, target, weights, dt, steering, record=True
    )
    return NominalTrajectory(
        config=config,
        controls=controls,
        tip_poses=poses,
        states=states,
        primitive=np.asarray(result.best, dtype=float),
        total_cost=total,
        final_cost=fc,
        target=target,
        dt=dt,
        steering=steering,
    )


def plan_steering(
    config: SimConfig,
    target: Tuple[float, float],
    weights: PlanWeights,
    horizon: int,
    dt: float,
    ce_params: ce.CEParams,
    *,
    stiffness_scale: float = 3.0,
    sigma_eps: float = 1.0,
    map_fn=map,
) -> NominalTrajectory:
    """Kinematic-like steering plan: guide motion frozen at its initial
    mean (zero) and needle bending stiffness lowered, so only insertion
    and bevel flips shape the trajectory."""
    soft = replace(config, young_modulus=config.young_modulus / stiffness_scale)
    return plan(
        soft, target, weights, horizon, dt, ce_params,
        steering=True, sigma_eps=sigma_eps, eps_mean=0.0, map_fn=map_fn,
    )


def replay(nominal: NominalTrajectory) -> List[SimState]:
    """Re-execute the nominal controls from a fresh simulation."""
    state = sim.new_simulation(nominal.config)
    states = [state]
    for inp in nominal.controls:
        state = sim.step(state, inp)
        states.append(state)
    return states
