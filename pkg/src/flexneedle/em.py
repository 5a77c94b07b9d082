"""Simulated EM tip-position sensor and grid-evaluation statistics.

The forward model inverts the measured error characterization: a
constant-per-run bias vector whose magnitude follows either the ideal
branch (indicator at or below threshold: normal magnitude around the
ideal mean error) or the noisy branch (linear in the indicator), plus
i.i.d. per-sample jitter. The statistics pipeline reproduces the grid
evaluation: per-point mean positions, Euclidean errors, dataset RMSE and
jitter, the piecewise error-indicator fit, and nearest-rank percentile
threshold selection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError

# Reference constants from the sensor characterization: ideal-environment
# error 0.575 +/- 0.211 mm, noisy-environment error 9.591*I + 0.051 mm,
# ideal 5DOF tip jitter 0.07 mm, indicator threshold 0.0547 (95th
# percentile of the ideal-environment indicator).
IDEAL_ERR_MEAN = 0.575
IDEAL_ERR_SD = 0.211
NOISY_SLOPE = 9.591
NOISY_INTERCEPT = 0.051
IDEAL_JITTER = 0.07
INDICATOR_THRESHOLD = 0.0547


@dataclass
class SensorModel:
    indicator: float = 0.02
    ideal_bias_mean: float = IDEAL_ERR_MEAN
    ideal_bias_sd: float = IDEAL_ERR_SD
    noisy_slope: float = NOISY_SLOPE
    noisy_intercept: float = NOISY_INTERCEPT
    jitter_sd: float = IDEAL_JITTER
    indicator_threshold: float = INDICATOR_THRESHOLD
    seed: int = 0
    _rng: Optional[np.random.Generator] = field(default=None, repr=False)
    _bias: Optional[np.ndarray] = field(default=None, repr=False)

    def validate(self) -> None:
        if not (0.0 <= self.indicator <= 9.9):
            raise ConfigurationError("indicator must lie in [0, 9.9]")
        for name in ("ideal_bias_mean", "ideal_bias_sd", "noisy_slope",
                     "noisy_intercept", "jitter_sd", "indicator_threshold"):
            if getattr(self, name) < 0.0:
                raise ConfigurationError(f"{name} must be >= 0")

    @property
    def rng(self) -> np.random.Generator:
        if self._rng is None:
            self._rng = np.random.default_rng(self.seed)
        return self._rng

    def bias_magnitude(self) -> float:
        """Draw a bias magnitude from the branch selected by the indicator."""
        if self.indicator <= self.indicator_threshold:
            return abs(self.rng.normal(self.ideal_bias_mean, self.ideal_bias_sd))
        return self.noisy_slope * self.indicator + self.noisy_intercept

    def draw_bias(self, dim: int) -> np.ndarray:
        """Draw a fresh constant bias vector (uniform direction)."""
        direction = self.rng.normal(size=dim)
        norm = np.linalg.norm(direction)
        if norm == 0.0:
            direction = np.zeros(dim)
            direction[0] = 1.0
            norm = 1.0
        self._bias = self.bias_magnitude() * direction / norm
        return self._bias


def simulate_reading(true_pos: Sequence[float], model: SensorModel) -> np.ndarray:
    """measurement = truth + per-run constant bias + per-sample jitter.

    The bias is drawn on first use and then held for the model instance's
    lifetime (one instance per insertion run); per-axis jitter sd is
    jitter_sd / sqrt(d) so the total jitter magnitude matches the scalar
    jitter figure.
    """
    true_pos = np.asarray(true_pos, dtype=float)
    d = true_pos.size
    if model._bias is None or model._bias.size != d:
        model.draw_bias(d)
    jitter = model.rng.normal(0.0, model.jitter_sd / math.sqrt(d), size=d) \
        if model.jitter_sd > 0.0 else np.zeros(d)
    return true_pos + model._bias + jitter


@dataclass
class GridDataset:
    """N grid points with M position samples and indicator readings each."""

    true_pos: np.ndarray  # (N, dim)
    samples: np.ndarray  # (N, M, dim)
    indicators: np.ndarray  # (N, M)

    def __post_init__(self):
        self.true_pos = np.asarray(self.true_pos, dtype=float)
        self.samples = np.asarray(self.samples, dtype=float)
        self.indicators = np.asarray(self.indicators, dtype=float)
        n, m, dim = self.samples.shape
        if self.true_pos.shape != (n, dim):
            raise ConfigurationError("true_pos / samples shape mismatch")
        if self.indicators.shape != (n, m):
            raise ConfigurationError("indicators shape mismatch")
        if n < 1 or m < 1:
            raise ConfigurationError("need N >= 1 grid points and M >= 1 samples")


def synth_grid(model: SensorModel, true_pos: np.ndarray, n_samples: int) -> GridDataset:
    """Synthesize a grid dataset; the bias is re-drawn per grid point
    (spatially varying field distortion), jitter per sample."""
    true_pos = np.atleast_2d(np.asarray(true_pos, dtype=float))
    n, dim = true_pos.shape
    samples = np.empty((n, n_samples, dim))
    for i in range(n):
        model.draw_bias(dim)
        for j in range(n_samples):
            samples[i, j] = true_pos[i] + model._bias + (
                model.rng.normal(0.0, model.jitter_sd / math.sqrt(dim), size=dim)
                if model.jitter_sd > 0.0 else 0.0
            )
    indicators = np.full((n, n_samples), model.indicator)
    return GridDataset(true_pos=true_pos, samples=samples, indicators=indicators)


def mean_position(samples: np.ndarray) -> np.ndarray:
    """Componentwise average of the samples at one grid point."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] < 1:
        raise ConfigurationError("need at least one sample")
    return samples.mean(axis=0)


def measurement_error(mean_pos: Sequence[float], true_pos: Sequence[float]) -> float:
    """Euclidean distance between the measured mean and ground truth."""
    return float(np.linalg.norm(np.asarray(mean_pos, float) - np.asarray(true_pos, float)))


def point_errors(dataset: GridDataset) -> np.ndarray:
    means = dataset.samples.mean(axis=1)
    return np.linalg.norm(means - dataset.true_pos, axis=1)


def dataset_rmse(errors: Sequence[float]) -> float:
    errors = np.asarray(errors, dtype=float)
    return float(np.sqrt(np.sum(errors**2) / errors.size))


def dataset_jitter(dataset: GridDataset) -> float:
    """RMS scatter of samples about their per-point means."""
    n, m, _ = dataset.samples.shape
    if m < 2:
        raise ConfigurationError("jitter needs M >= 2 samples per point")
    means = dataset.samples.mean(axis=1, keepdims=True)
    sq = np.sum((dataset.samples - means) ** 2, axis=2)
    return float(np.sqrt(np.sum(sq) / (n * m)))


@dataclass(frozen=True)
class PiecewiseFit:
    ideal_mean: float
    ideal_sd: float
    slope: float
    intercept: float
    breakpoint: float


def fit_error_indicator(indicators: Sequence[float], errors: Sequence[float],
                        breakpoint: float) -> PiecewiseFit:
    """Constant fit (mean, sd) at or below the breakpoint, least-squares
    line above it."""
    ind = np.asarray(indicators, dtype=float)
    err = np.asarray(errors, dtype=float)
    low = ind <= breakpoint
    high = ~low
    if low.sum() < 2 or high.sum() < 2:
        raise ConfigurationError("need >= 2 points on each side of the breakpoint")
    slope, intercept = np.polyfit(ind[high], err[high], 1)
    return PiecewiseFit(
        ideal_mean=float(err[low].mean()),
        ideal_sd=float(err[low].std()),
        slope=float(slope),
        intercept=float(intercept),
        breakpoint=breakpoint,
    )


def indicator_threshold(samples: Sequence[float], percentile: float) -> float:
    """Nearest-rank empirical percentile of the indicator samples."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ConfigurationError("indicator samples must be nonempty")
    if not (0.0 < percentile < 100.0):
        raise ConfigurationError("percentile must lie in (0, 100)")
    rank = max(1, math.ceil(percentile / 100.0 * samples.size))
    return float(np.sort(samples)[rank - 1])


@dataclass(frozen=True)
class ErrorReport:
    errors: np.ndarray
    rmse: float
    jitter: float


def evaluate_grid(dataset: GridDataset) -> ErrorReport:
    errors = point_errors(dataset)
    return ErrorReport(errors=errors, rmse=dataset_rmse(errors),
                       jitter=dataset_jitter(dataset))
