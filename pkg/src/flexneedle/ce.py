"""Cross-entropy optimization over Gaussian-distributed control primitives.

Multi-level search: sample a batch, keep the elite quantile, refit the
Gaussian to the elites (empirical mean, biased scatter covariance), and
repeat until the mean stops moving or the iteration budget runs out.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .errors import ConfigurationError


@dataclass
class CEDistribution:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)
        if self.mean.ndim != 1 or self.mean.size == 0:
            raise ConfigurationError("CE mean must be a nonempty 1-D vector")
        if self.cov.shape != (self.mean.size, self.mean.size):
            raise ConfigurationError("CE covariance shape mismatch")
        if not np.allclose(self.cov, self.cov.T, atol=1e-12):
            raise ConfigurationError("CE covariance must be symmetric")


@dataclass
class CEParams:
    n_samples: int = 100
    elite_frac: float = 0.1
    max_iters: int = 50
    mean_tol: float = 1e-4
    cov_floor: float = 1e-6
    cov_smoothing: float = 0.7  # new-covariance weight; 1.0 = no memory
    seed: int = 0

    def validate(self) -> None:
        if self.n_samples < 2:
            raise ConfigurationError("n_samples must be >= 2")
        if not (0.0 < self.elite_frac < 1.0):
            raise ConfigurationError("elite_frac must be in (0, 1)")
        if elite_count(self.n_samples, self.elite_frac) < 2:
            raise ConfigurationError("ceil(elite_frac * n_samples) must be >= 2")
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be >= 1")
        if not (0.0 < self.cov_smoothing <= 1.0):
            raise ConfigurationError("cov_smoothing must be in (0, 1]")


@dataclass
class CEIteration:
    gamma: float
    mean: np.ndarray
    best_cost: float


@dataclass
class CEResult:
    best: np.ndarray
    best_cost: float
    dist: CEDistribution
    history: List[CEIteration] = field(default_factory=list)

    @property
    def n_iters(self) -> int:
        return len(self.history)


def elite_count(n_samples: int, rho: float) -> int:
    return math.ceil(rho * n_samples)


def quantile_threshold(costs: Sequence[float], rho: float) -> float:
    """The ceil(rho*N)-th smallest cost."""
    costs = np.asarray(costs, dtype=float)
    if costs.size == 0:
        raise ConfigurationError("costs must be nonempty")
    k = min(elite_count(costs.size, rho), costs.size)
    return float(np.partition(costs, k - 1)[k - 1])


def elite_set(samples: np.ndarray, costs: Sequence[float], gamma: float,
              rho: float) -> np.ndarray:
    """Samples with cost <= gamma; falls back to the ceil(rho*N) lowest-cost
    samples when the threshold admits none."""
    samples = np.asarray(samples, dtype=float)
    costs = np.asarray(costs, dtype=float)
    mask = costs <= gamma
    if mask.any():
        return samples[mask]
    k = min(elite_count(costs.size, rho), costs.size)
    order = np.argsort(costs, kind="stable")[:k]
    return samples[order]


def update_params(elites: np.ndarray, cov_floor: float = 1e-6) -> CEDistribution:
    """Elite mean and biased (1/|E|) scatter covariance, diagonal-floored."""
    elites = np.atleast_2d(np.asarray(elites, dtype=float))
    if elites.shape[0] < 1:
        raise ConfigurationError("need at least one elite sample")
    mean = elites.mean(axis=0)
    centered = elites - mean
    cov = centered.T @ centered / elites.shape[0]
    idx = np.arange(cov.shape[0])
    cov[idx, idx] = np.maximum(cov[idx, idx], cov_floor)
    return CEDistribution(mean=mean, cov=cov)


def _sample_transform(cov: np.ndarray) -> np.ndarray:
    """Matrix L with L L^T = cov; tolerates PSD (including zero) matrices."""
    if not np.any(cov):
        return np.zeros_like(cov)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(cov)
        return vecs * np.sqrt(np.clip(vals, 0.0, None))


def optimize(
    objective: Callable[[np.ndarray], float],
    init: CEDistribution,
    params: CEParams,
    map_fn: Callable = map,
) -> CEResult:
    """Run the CE search and return the best-ever sample.

    ``map_fn`` lets callers evaluate the batch concurrently; samples are
    drawn in a fixed order from a single seeded generator, so results are
    reproducible regardless of evaluation scheduling.
    """
    params.validate()
    rng = np.random.default_rng(params.seed)
    dist = CEDistribution(init.mean.copy(), init.cov.copy())
    best: Optional[np.ndarray] = None
    best_cost = math.inf
    gamma = math.inf  # gamma_0: the first iteration keeps every sample
    history: List[CEIteration] = []
    for _ in range(params.max_iters):
        L = _sample_transform(dist.cov)
        z = dist.mean + rng.standard_normal((params.n_samples, dist.mean.size)) @ L.T
        costs = np.fromiter(map_fn(objective, z), dtype=float, count=params.n_samples)
        i_best = int(np.argmin(costs))
        if costs[i_best] < best_cost:
            best_cost = float(costs[i_best])
            best = z[i_best].copy()
        # elites clear the previous iteration's bar; then tighten it
        elites = elite_set(z, costs, gamma, params.elite_frac)
        gamma = quantile_threshold(costs, params.elite_frac)
        fit = update_params(elites, params.cov_floor)
        # exponential covariance smoothing guards against premature
        # collapse of the sampling distribution
        a = params.cov_smoothing
        new_dist = CEDistribution(fit.mean, a * fit.cov + (1.0 - a) * dist.cov)
        history.append(CEIteration(gamma=gamma, mean=new_dist.mean.copy(),
                                   best_cost=best_cost))
        shift = float(np.linalg.norm(new_dist.mean - dist.mean))
        dist = new_dist
        if shift < params.mean_tol:
            break
    assert best is not None
    return CEResult(best=best, best_cost=best_cost, dist=dist, history=history)


def write_history_csv(result: CEResult, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        dim = result.best.size
        writer.writerow(["iteration", "gamma", "best_cost"]
                        + [f"mean_{i}" for i in range(dim)])
        for i, rec in enumerate(result.history):
            writer.writerow([i, f"{rec.gamma:.9g}", f"{rec.best_cost:.9g}"]
                            + [f"{v:.9g}" for v in rec.mean])
