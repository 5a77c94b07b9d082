"""Closed-loop insertion harness and batch campaigns.

The plant is a second simulator instance with perturbed parameters
(initial frame offset, scaled tissue stiffness) standing in for the
physical system; the controller-internal model only sees the plant
through the simulated EM sensor. Each control step runs: sensor reading
-> feedback re-registration -> CE tracking step -> bang-bang flip
decision -> apply to both plant and model.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from . import bangbang, em, planner, sim, tracker
from .errors import FeedbackError, FlexNeedleError
from .io import CLOSED_LOOP_COLUMNS, fmt
from .planner import NominalTrajectory
from .scenario import Scenario
from .sim import ControlInput, SimConfig, SimState


@dataclass
class InsertionResult:
    target: Tuple[float, float]
    plant_tip: Tuple[float, float]
    model_tip: Tuple[float, float]
    targeting_error: float
    model_error: float
    flip_count: int
    guide_travel: float
    peak_strain_energy: float
    rows: List[list] = field(default_factory=list, repr=False)
    status: str = "ok"


def derive_seed(*entropy: int) -> int:
    """Stable (unsalted) seed derivation for campaign runs."""
    return int(np.random.SeedSequence(list(entropy)).generate_state(1)[0])


def perturbed_config(config: SimConfig, mu_scale: float) -> SimConfig:
    layers = tuple(replace(l, mu=l.mu * mu_scale) for l in config.layers)
    return replace(config, layers=layers)


def perturbed_plant(config: SimConfig, lateral_offset: float,
                    angle: float) -> SimState:
    """Plant-truth simulator with a rigid initial frame offset: the whole
    needle, base clamp, and guide start shifted/rotated, standing in for
    registration error between the controller frame and reality."""
    state = sim.new_simulation(config)
    slope = math.tan(angle)
    s = np.arange(config.n_nodes) * config.element_length
    state.d[0::2] = lateral_offset + slope * s
    state.d[1::2] = slope  # straight tilted line: rotation DOF = dv/ds
    state.clamp_y = lateral_offset
    state.clamp_theta = slope
    s_g = config.guide_x - state.base_x
    state.guide_y = lateral_offset + slope * s_g
    return state


def make_sensor(scenario: Scenario, seed: int) -> em.SensorModel:
    s = scenario.sensor
    return em.SensorModel(
        indicator=s.indicator,
        ideal_bias_mean=s.ideal_bias_mean,
        ideal_bias_sd=s.ideal_bias_sd,
        noisy_slope=s.noisy_slope,
        noisy_intercept=s.noisy_intercept,
        jitter_sd=s.jitter_sd,
        indicator_threshold=s.indicator_threshold,
        seed=seed,
    )


def plan_for_target(scenario: Scenario, target: Tuple[float, float],
                    seed: int) -> NominalTrajectory:
    ps = scenario.plan
    ce_params = replace(scenario.plan_ce, seed=seed)
    kwargs = dict(map_fn=map)
    if ps.mode == "steering":
        return planner.plan_steering(
            scenario.sim_config, target, scenario.weights, ps.horizon, ps.dt,
            ce_params, stiffness_scale=ps.steering_stiffness_scale,
            sigma_eps=ps.sigma_eps, **kwargs,
        )
    return planner.plan(
        scenario.sim_config, target, scenario.weights, ps.horizon, ps.dt,
        ce_params, sigma_db=ps.sigma_db, sigma_dg=ps.sigma_dg,
        sigma_eps=ps.sigma_eps, eps_mean=ps.eps_mean, **kwargs,
    )


def open_loop_replay(scenario: Scenario, nominal: NominalTrajectory,
                     target: Tuple[float, float]) -> float:
    """Targeting error of the nominal controls executed blindly on the
    perturbed plant."""
    p = scenario.perturbation
    plant = perturbed_plant(
        perturbed_config(scenario.sim_config, p.mu_scale),
        p.initial_lateral_offset, p.initial_angle,
    )
    for inp in nominal.controls:
        plant = sim.step(plant, inp)
    tx, ty, _ = sim.tip_pose(plant)
    return math.hypot(tx - target[0], ty - target[1])


REGISTRATION_READINGS = 25


def register_target(target: Tuple[float, float],
                    sensor: em.SensorModel,
                    n_readings: int = REGISTRATION_READINGS) -> np.ndarray:
    """Localize the target through the sensor (mean of repeated readings).

    Tip feedback and the target share the sensor's constant per-run bias,
    so controlling in the sensor frame cancels it; only the averaged-down
    jitter remains.
    """
    readings = np.array([em.simulate_reading(target, sensor)
                         for _ in range(n_readings)])
    return em.mean_position(readings)


def run_insertion(
    scenario: Scenario,
    target: Tuple[float, float],
    seed: int,
    nominal: Optional[NominalTrajectory] = None,
) -> InsertionResult:
    """One closed-loop insertion; deterministic given (scenario, target, seed)."""
    if nominal is None:
        nominal = plan_for_target(scenario, target, derive_seed(seed, 0))
    sensor_seed = derive_seed(seed, 1)
    track_seed = derive_seed(seed, 2)

    p = scenario.perturbation
    plant = perturbed_plant(
        perturbed_config(scenario.sim_config, p.mu_scale),
        p.initial_lateral_offset, p.initial_angle,
    )
    model = sim.new_simulation(scenario.sim_config)
    sensor = make_sensor(scenario, sensor_seed)
    ts = scenario.tracking
    kin = scenario.kinematic

    # the controller works entirely in the sensor frame: the target is
    # registered through the same tracker that feeds back the tip position
    if scenario.sensor.enabled:
        reg = register_target(target, sensor)
        shift = np.array([reg[0] - target[0], reg[1] - target[1], 0.0])
    else:
        shift = np.zeros(3)
    ctrl_target = (target[0] + shift[0], target[1] + shift[1])
    ctrl_poses = np.asarray(nominal.tip_poses, dtype=float) + shift
    ctrl_nominal = NominalTrajectory(
        config=nominal.config, controls=nominal.controls,
        tip_poses=ctrl_poses, dt=nominal.dt, steering=nominal.steering,
    )

    flip_count = 0
    guide_travel = 0.0
    peak_energy = 0.0
    rows: List[list] = []
    x0, y0, t0 = sim.tip_pose(plant)
    rows.append([0, fmt(0.0), fmt(0.0), -1, plant.bvl, fmt(x0), fmt(y0), fmt(t0),
                 fmt(sim.strain_energy(plant)), fmt(0.0), fmt(0.0), -1])

    for s0 in range(nominal.horizon):
        plant_tip = sim.tip_pose(plant)[:2]
        if scenario.sensor.enabled:
            meas = em.simulate_reading(plant_tip, sensor)
        else:
            meas = np.asarray(plant_tip, dtype=float)
        # observer update: blend the reading with the model prediction so
        # per-step jitter is low-passed while true deviations still
        # converge geometrically
        g = ts.feedback_gain
        mtip = sim.tip_pose(model)[:2]
        fused = (mtip[0] + g * (float(meas[0]) - mtip[0]),
                 mtip[1] + g * (float(meas[1]) - mtip[1]))
        try:
            model = tracker.apply_feedback(model, fused)
        except FeedbackError:
            pass  # keep the prior estimate
        cont = tracker.track_step(
            model, ctrl_nominal, s0, ts.window, ts.se2,
            replace(scenario.track_ce, seed=(track_seed + s0) % 2**63),
            sigma_reinit=(ts.sigma_db, ts.sigma_dg),
            entry_theta_boost=ts.entry_theta_boost,
            entry_band=ts.entry_band,
            target=ctrl_target,
            target_weight=ts.target_weight,
        )
        flip = -1
        if ts.flip_mode == "nominal":
            flip = nominal.controls[s0].flip
        else:
            tip = sim.tip_pose(model)
            lookahead = ctrl_target[0] - tip[0]
            if sim.in_tissue(model) and lookahead > 0.0:
                flip = bangbang.decide_flip(tip, model.bvl, ctrl_target, kin,
                                            lookahead)
        inp = ControlInput(cont.db_x, cont.dg_y, flip)
        plant = sim.step(plant, inp)
        model = sim.step(model, inp)
        if flip == 1:
            flip_count += 1
        guide_travel += abs(inp.dg_y)
        peak_energy = max(peak_energy, sim.strain_energy(plant))
        px, py, pt = sim.tip_pose(plant)
        rows.append([s0 + 1, fmt(inp.db_x), fmt(inp.dg_y), flip, plant.bvl,
                     fmt(px), fmt(py), fmt(pt), fmt(sim.strain_energy(plant)),
                     fmt(float(meas[0])), fmt(float(meas[1])), flip])

    px, py, _ = sim.tip_pose(plant)
    mx, my, _ = sim.tip_pose(model)
    return InsertionResult(
        target=target,
        plant_tip=(px, py),
        model_tip=(mx, my),
        targeting_error=math.hypot(px - target[0], py - target[1]),
        model_error=math.hypot(mx - target[0], my - target[1]),
        flip_count=flip_count,
        guide_travel=guide_travel,
        peak_strain_energy=peak_energy,
        rows=rows,
    )


RUN_COLUMNS = [
    "target_index", "depth_mm", "lateral_mm", "repetition", "seed",
    "targeting_error_mm", "open_loop_error_mm", "model_error_mm",
    "flip_count", "guide_travel_mm", "peak_strain_energy", "status",
]


@dataclass
class CampaignRun:
    target_index: int
    depth: float
    lateral: float
    repetition: int
    seed: int
    result: Optional[InsertionResult]
    open_loop_error: float
    status: str = "ok"

    def row(self) -> list:
        r = self.result
        if r is None:
            return [self.target_index, fmt(self.depth), fmt(self.lateral),
                    self.repetition, self.seed, "", fmt(self.open_loop_error),
                    "", "", "", "", self.status]
        return [self.target_index, fmt(self.depth), fmt(self.lateral),
                self.repetition, self.seed, fmt(r.targeting_error),
                fmt(self.open_loop_error), fmt(r.model_error), r.flip_count,
                fmt(r.guide_travel), fmt(r.peak_strain_energy), self.status]


@dataclass
class CampaignSummary:
    runs: List[CampaignRun]
    mean_error: float
    sd_error: float

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.result.targeting_error for r in self.runs
                         if r.result is not None])

    @property
    def open_loop_errors(self) -> np.ndarray:
        return np.array([r.open_loop_error for r in self.runs
                         if r.result is not None])


def _campaign_run(args):
    scenario, target, t_idx, rep, run_seed, nominal = args
    try:
        result = run_insertion(scenario, target, run_seed, nominal=nominal)
        status = "ok"
    except FlexNeedleError as exc:
        result = None
        status = f"failed: {exc}"
    return CampaignRun(
        target_index=t_idx,
        depth=target[0] - scenario.sim_config.skin_x,
        lateral=target[1],
        repetition=rep,
        seed=run_seed,
        result=result,
        open_loop_error=open_loop_replay(scenario, nominal, target),
        status=status,
    )


def campaign_plan_seed(master_seed: int, t_idx: int) -> int:
    """Seed used for the shared per-target plan in a campaign."""
    return derive_seed(master_seed, 1000 + t_idx)


def run_campaign(scenario: Scenario, master_seed: int,
                 threads: int = 1, progress=None,
                 plans: Optional[List[NominalTrajectory]] = None) -> CampaignSummary:
    """All targets x repetitions. One plan per target (seeded from the
    master seed and target index) is shared across its repetitions; each
    repetition gets its own sensor/tracking seed.

    ``plans`` may supply precomputed per-target nominal trajectories (one
    per target, in ``scenario.targets()`` order); they must have been
    planned with ``campaign_plan_seed`` to reproduce the default output.
    """
    targets = scenario.targets()
    if plans is not None and len(plans) != len(targets):
        raise ValueError("plans must supply one trajectory per target")
    jobs = []
    for t_idx, target in enumerate(targets):
        if plans is not None:
            nominal = plans[t_idx]
        else:
            nominal = plan_for_target(scenario, target,
                                      campaign_plan_seed(master_seed, t_idx))
        if progress:
            progress(f"planned target {t_idx + 1}/{len(targets)}")
        for rep in range(scenario.repetitions):
            run_seed = derive_seed(master_seed, t_idx, rep)
            jobs.append((scenario, target, t_idx, rep, run_seed, nominal))

    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            runs = list(pool.map(_campaign_run, jobs))
    else:
        runs = []
        for job in jobs:
            runs.append(_campaign_run(job))
            if progress:
                progress(f"run {len(runs)}/{len(jobs)} done")

    errors = np.array([r.result.targeting_error for r in runs if r.result])
    mean = float(errors.mean()) if errors.size else math.nan
    sd = float(errors.std()) if errors.size else math.nan
    return CampaignSummary(runs=runs, mean_error=mean, sd_error=sd)


def write_campaign(summary: CampaignSummary, out_dir,
                   scenario_path=None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "runs.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RUN_COLUMNS)
        for run in summary.runs:
            writer.writerow(run.row())
    with open(out / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n_runs", "n_failed", "mean_error_mm", "sd_error_mm",
                         "mean_open_loop_error_mm"])
        n_failed = sum(1 for r in summary.runs if r.result is None)
        ol = summary.open_loop_errors
        writer.writerow([len(summary.runs), n_failed, fmt(summary.mean_error),
                         fmt(summary.sd_error),
                         fmt(float(ol.mean()) if ol.size else math.nan)])
    if scenario_path is not None:
        (out / "scenario.toml").write_bytes(Path(scenario_path).read_bytes())


def write_insertion_csv(path, result: InsertionResult) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CLOSED_LOOP_COLUMNS)
        writer.writerows(result.rows)
