"""CSV export/import for trajectories and campaign reports.

All floats are written with a fixed '%.10g' format so repeated runs with
the same seed produce byte-identical files.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .planner import NominalTrajectory
from .sim import ControlInput, SimConfig

TRAJECTORY_COLUMNS = [
    "step", "db_x", "dg_y", "flip", "bvl",
    "tip_x", "tip_y", "tip_theta", "strain_energy",
]
CLOSED_LOOP_COLUMNS = TRAJECTORY_COLUMNS + ["measured_x", "measured_y", "flip_decision"]


def fmt(x: float) -> str:
    return f"{x:.10g}"


def write_trajectory_csv(path, nominal: NominalTrajectory,
                         strain_energies: Optional[Sequence[float]] = None) -> None:
    """One row per step; row 0 carries the initial state with null controls."""
    if strain_energies is None:
        if nominal.states is None:
            raise ValueError("need either recorded states or explicit strain energies")
        from . import sim
        strain_energies = [sim.strain_energy(s) for s in nominal.states]
    bvl = 1
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAJECTORY_COLUMNS)
        x0, y0, t0 = nominal.tip_poses[0]
        writer.writerow([0, fmt(0.0), fmt(0.0), -1, bvl,
                         fmt(x0), fmt(y0), fmt(t0), fmt(strain_energies[0])])
        for s, inp in enumerate(nominal.controls, start=1):
            if inp.flip == 1:
                bvl = -bvl
            x, y, th = nominal.tip_poses[s]
            writer.writerow([s, fmt(inp.db_x), fmt(inp.dg_y), inp.flip, bvl,
                             fmt(x), fmt(y), fmt(th), fmt(strain_energies[s])])


def read_trajectory_csv(path, config: SimConfig, dt: float = 0.1) -> NominalTrajectory:
    """Rebuild the nominal controls and tip-pose path from a trajectory CSV."""
    controls: List[ControlInput] = []
    poses: List[List[float]] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            poses.append([float(row["tip_x"]), float(row["tip_y"]),
                          float(row["tip_theta"])])
            if int(row["step"]) > 0:
                controls.append(ControlInput(float(row["db_x"]), float(row["dg_y"]),
                                             int(row["flip"])))
    if len(poses) != len(controls) + 1:
        raise ValueError(f"trajectory file {path} is malformed")
    return NominalTrajectory(config=config, controls=controls,
                             tip_poses=np.array(poses), dt=dt)


def write_grid_csv(path, dataset) -> None:
    """Grid dataset rows: point_id, true_*, meas_*, indicator (2-D datasets
    write zeros for the z columns)."""
    n, m, dim = dataset.samples.shape
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["point_id", "true_x", "true_y", "true_z",
                         "meas_x", "meas_y", "meas_z", "indicator"])
        for i in range(n):
            truth = list(dataset.true_pos[i]) + [0.0] * (3 - dim)
            for j in range(m):
                meas = list(dataset.samples[i, j]) + [0.0] * (3 - dim)
                writer.writerow([i] + [fmt(v) for v in truth]
                                + [fmt(v) for v in meas]
                                + [fmt(dataset.indicators[i, j])])


def read_grid_csv(path):
    from .em import GridDataset
    points = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            pid = int(row["point_id"])
            entry = points.setdefault(pid, {"true": None, "meas": [], "ind": []})
            entry["true"] = [float(row["true_x"]), float(row["true_y"]),
                             float(row["true_z"])]
            entry["meas"].append([float(row["meas_x"]), float(row["meas_y"]),
                                  float(row["meas_z"])])
            entry["ind"].append(float(row["indicator"]))
    pids = sorted(points)
    true_pos = np.array([points[p]["true"] for p in pids])
    samples = np.array([points[p]["meas"] for p in pids])
    indicators = np.array([points[p]["ind"] for p in pids])
    return GridDataset(true_pos=true_pos, samples=samples, indicators=indicators)
