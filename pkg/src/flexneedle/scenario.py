"""Scenario configuration: TOML parsing, validation, and defaults.

A scenario bundles everything one insertion campaign needs: the
simulator configuration, the target grid, plant perturbations, the
sensor model, cost weights, CE budgets for planning and tracking, and
the bang-bang kinematic parameters.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import List, Optional, Tuple

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .bangbang import KinematicParams
from .ce import CEParams
from .errors import ConfigurationError
from .planner import PlanWeights
from .sim import SimConfig, TissueLayer, second_moment_from_od
from .tracker import SE2Weight


@dataclass(frozen=True)
class PlantPerturbation:
    initial_lateral_offset: float = 0.0  # mm
    initial_angle: float = 0.0  # rad
    mu_scale: float = 1.0


@dataclass(frozen=True)
class SensorSettings:
    indicator: float = 0.02
    jitter_sd: float = 0.07
    ideal_bias_mean: float = 0.575
    ideal_bias_sd: float = 0.211
    noisy_slope: float = 9.591
    noisy_intercept: float = 0.051
    indicator_threshold: float = 0.0547
    enabled: bool = True


@dataclass(frozen=True)
class TrackingSettings:
    se2: SE2Weight = SE2Weight()
    window: int = 5
    sigma_db: float = 0.2  # mm
    sigma_dg: float = 0.3  # mm
    entry_theta_boost: float = 10.0
    entry_band: float = 5.0
    flip_mode: str = "bangbang"  # or "nominal"
    # observer gain on tip feedback: 1.0 snaps the model to each raw
    # reading, smaller values low-pass the measurement jitter
    feedback_gain: float = 0.4
    # terminal MPC cost weight (1/mm^2) pulling the final window toward
    # the target itself rather than the nominal plan's endpoint
    target_weight: float = 50.0


@dataclass(frozen=True)
class PlanSettings:
    horizon: int = 60
    dt: float = 0.1
    mode: str = "manipulation"  # or "steering"
    sigma_db: float = 0.05
    sigma_dg: float = 0.25
    sigma_eps: float = 0.5
    eps_mean: float = -0.5
    steering_stiffness_scale: float = 3.0


@dataclass(frozen=True)
class Scenario:
    sim_config: SimConfig
    depths: Tuple[float, ...] = (25.0, 30.0, 35.0, 40.0, 45.0)
    lateral_offsets: Tuple[float, ...] = (-5.0, 0.0, 5.0)
    repetitions: int = 10
    perturbation: PlantPerturbation = PlantPerturbation(0.5, 0.0, 1.1)
    sensor: SensorSettings = SensorSettings()
    weights: PlanWeights = PlanWeights()
    tracking: TrackingSettings = TrackingSettings()
    plan: PlanSettings = PlanSettings()
    plan_ce: CEParams = field(default_factory=lambda: CEParams(
        n_samples=64, elite_frac=0.1, max_iters=30, mean_tol=1e-3))
    track_ce: CEParams = field(default_factory=lambda: CEParams(
        n_samples=24, elite_frac=0.25, max_iters=2, mean_tol=1e-4))
    kinematic: KinematicParams = KinematicParams()

    def validate(self) -> None:
        self.sim_config.validate()
        cfg = self.sim_config
        for depth in self.depths:
            if not (cfg.skin_x < cfg.skin_x + depth <= cfg.tissue_x_max):
                raise ConfigurationError(f"target depth {depth} outside tissue bounds")
        if self.repetitions < 1:
            raise ConfigurationError("repetitions must be >= 1")
        if self.tracking.flip_mode not in ("bangbang", "nominal"):
            raise ConfigurationError("tracking.flip_mode must be 'bangbang' or 'nominal'")
        if not (0.0 < self.tracking.feedback_gain <= 1.0):
            raise ConfigurationError("tracking.feedback_gain must be in (0, 1]")
        if self.plan.mode not in ("manipulation", "steering"):
            raise ConfigurationError("plan.mode must be 'manipulation' or 'steering'")
        self.kinematic.validate()

    def targets(self) -> List[Tuple[float, float]]:
        """World-frame targets: (skin_x + depth, lateral offset)."""
        skin = self.sim_config.skin_x
        return [(skin + d, o) for d in self.depths for o in self.lateral_offsets]


def _section(data: dict, name: str) -> dict:
    if name not in data:
        raise ConfigurationError(f"scenario file is missing the [{name}] section")
    return data[name]


def _get(section: dict, key: str, default=None, where: str = ""):
    if key in section:
        return section[key]
    if default is None:
        raise ConfigurationError(f"missing key '{key}' in [{where}]")
    return default


def _layers_from_depths(entries: list, skin_x: float) -> Tuple[TissueLayer, ...]:
    layers = []
    x = skin_x
    for i, entry in enumerate(entries):
        where = f"tissue.layers[{i}]"
        depth = float(_get(entry, "depth_mm", where=where))
        if depth <= 0.0:
            raise ConfigurationError(f"{where}: depth_mm must be positive")
        mu = float(_get(entry, "mu_kpa", where=where)) * 1e3
        alpha = float(_get(entry, "alpha", where=where))
        weight = float(entry.get("weight", 1.0))
        layers.append(TissueLayer(x, x + depth, mu, alpha, weight))
        x += depth
    return tuple(layers)


def parse_scenario(path) -> Scenario:
    """Load and validate a scenario TOML file.

    Raises ConfigurationError with the offending section or key named.
    """
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"scenario file is not valid TOML: {exc}") from exc

    needle = _section(data, "needle")
    tissue = _section(data, "tissue")
    geometry = _section(data, "geometry")
    solver = data.get("solver", {})
    limits = data.get("limits", {})

    if "layers" not in tissue or not tissue["layers"]:
        raise ConfigurationError("section [tissue] must define at least one [[tissue.layers]] entry")

    guide_to_skin = float(_get(geometry, "guide_to_skin_mm", where="geometry"))
    skin_x = 0.0
    sim_config = SimConfig(
        n_nodes=int(_get(needle, "n_nodes", 41, "needle")),
        element_length=float(_get(needle, "element_length_mm", 3.0, "needle")),
        young_modulus=float(_get(needle, "young_modulus_gpa", where="needle")) * 1e9,
        second_moment=second_moment_from_od(
            float(_get(needle, "outer_diameter_mm", where="needle"))),
        guide_x=skin_x - guide_to_skin,
        skin_x=skin_x,
        tip_to_skin=float(_get(geometry, "tip_to_skin_mm", where="geometry")),
        bevel_offset=float(_get(needle, "bevel_offset_mm", 0.41, "needle")),
        bevel_gain=float(_get(needle, "bevel_gain", 78.0, "needle")),
        contact_spacing=float(solver.get("contact_spacing_mm", 1.0)),
        t_char=float(solver.get("t_char_mm", 10.0)),
        layers=_layers_from_depths(tissue["layers"], skin_x),
        newton_tol=float(solver.get("tolerance", 1e-3)),
        max_newton_iters=int(solver.get("max_newton_iters", 60)),
        db_x_max=float(limits.get("db_x_max_mm", 2.0)),
        dg_y_max=float(limits.get("dg_y_max_mm", 1.0)),
    )

    targets = data.get("targets", {})
    perturb = data.get("perturbations", {})
    sensor = data.get("sensor", {})
    weights = data.get("weights", {})
    tracking = data.get("tracking", {})
    plan = data.get("plan", {})
    kin = data.get("kinematic", {})

    def ce_params(section_name: str, defaults: CEParams) -> CEParams:
        sec = data.get(section_name, {})
        return CEParams(
            n_samples=int(sec.get("n_samples", defaults.n_samples)),
            elite_frac=float(sec.get("elite_frac", defaults.elite_frac)),
            max_iters=int(sec.get("max_iters", defaults.max_iters)),
            mean_tol=float(sec.get("mean_tol", defaults.mean_tol)),
            cov_floor=float(sec.get("cov_floor", defaults.cov_floor)),
            cov_smoothing=float(sec.get("cov_smoothing", defaults.cov_smoothing)),
        )

    base = Scenario(sim_config=sim_config)
    scenario = Scenario(
        sim_config=sim_config,
        depths=tuple(float(d) for d in targets.get("depths_mm", base.depths)),
        lateral_offsets=tuple(float(o) for o in targets.get(
            "lateral_offsets_mm", base.lateral_offsets)),
        repetitions=int(targets.get("repetitions", base.repetitions)),
        perturbation=PlantPerturbation(
            initial_lateral_offset=float(perturb.get("initial_lateral_offset_mm", 0.5)),
            initial_angle=float(perturb.get("initial_angle_rad", 0.0)),
            mu_scale=float(perturb.get("plant_mu_scale", 1.1)),
        ),
        sensor=SensorSettings(
            indicator=float(sensor.get("indicator", 0.02)),
            jitter_sd=float(sensor.get("jitter_sd_mm", 0.07)),
            ideal_bias_mean=float(sensor.get("ideal_bias_mean_mm", 0.575)),
            ideal_bias_sd=float(sensor.get("ideal_bias_sd_mm", 0.211)),
            noisy_slope=float(sensor.get("noisy_slope_mm", 9.591)),
            noisy_intercept=float(sensor.get("noisy_intercept_mm", 0.051)),
            indicator_threshold=float(sensor.get("indicator_threshold", 0.0547)),
            enabled=bool(sensor.get("enabled", True)),
        ),
        weights=PlanWeights(
            q_deflection=float(weights.get("q_deflection", 1e-3)),
            r_guide=float(weights.get("r_guide", 1.0)),
            r_flip=float(weights.get("r_flip", 0.1)),
            gamma_target=float(weights.get("gamma_target", 10.0)),
            gamma_energy=float(weights.get("gamma_energy", 1e-3)),
        ),
        tracking=TrackingSettings(
            se2=SE2Weight(
                w_x=float(tracking.get("w_x", 1.0)),
                w_y=float(tracking.get("w_y", 1.0)),
                w_theta=float(tracking.get("w_theta", 400.0)),
            ),
            window=int(tracking.get("window", 5)),
            sigma_db=float(tracking.get("sigma_db_mm", 0.2)),
            sigma_dg=float(tracking.get("sigma_dg_mm", 0.3)),
            entry_theta_boost=float(tracking.get("entry_theta_boost", 10.0)),
            entry_band=float(tracking.get("entry_band_mm", 5.0)),
            flip_mode=str(tracking.get("flip_mode", "bangbang")),
            feedback_gain=float(tracking.get("feedback_gain", 0.4)),
            target_weight=float(tracking.get("target_weight", 50.0)),
        ),
        plan=PlanSettings(
            horizon=int(plan.get("horizon", 60)),
            dt=float(plan.get("dt", 0.1)),
            mode=str(plan.get("mode", "manipulation")),
            sigma_db=float(plan.get("sigma_db", 0.05)),
            sigma_dg=float(plan.get("sigma_dg", 0.25)),
            sigma_eps=float(plan.get("sigma_eps", 0.5)),
            eps_mean=float(plan.get("eps_mean", -0.5)),
            steering_stiffness_scale=float(plan.get("steering_stiffness_scale", 3.0)),
        ),
        plan_ce=ce_params("plan_ce", base.plan_ce),
        track_ce=ce_params("track_ce", base.track_ce),
        kinematic=KinematicParams(
            curvature=float(kin.get("curvature_per_mm", 0.005)),
            sub_step=float(kin.get("sub_step_mm", 0.5)),
            flip_hysteresis=float(kin.get("flip_hysteresis_mm", 0.05)),
        ),
    )
    scenario.validate()
    return scenario


def default_scenario_path():
    """Path to the bundled two-layer phantom scenario."""
    return resources.files("flexneedle").joinpath("data/phantom.toml")


def load_default_scenario() -> Scenario:
    with resources.as_file(default_scenario_path()) as path:
        return parse_scenario(path)
