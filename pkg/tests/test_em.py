import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flexneedle import em
from flexneedle.em import GridDataset, SensorModel
from flexneedle.errors import ConfigurationError


def make_grid(seed=0, n=12, m=40, indicator=0.02):
    model = SensorModel(indicator=indicator, seed=seed)
    rng = np.random.default_rng(seed + 1)
    true_pos = rng.uniform(0.0, 200.0, size=(n, 3))
    return em.synth_grid(model, true_pos, m)


def test_mean_position_and_error():
    samples = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.allclose(em.mean_position(samples), [2.0, 3.0])
    assert em.measurement_error([2.0, 3.0], [2.0, 0.0]) == pytest.approx(3.0)


def test_rmse_example():
    assert em.dataset_rmse([3.0, 4.0]) == pytest.approx(math.sqrt(12.5))
    assert em.dataset_rmse([0.5]) == pytest.approx(0.5)


def test_rmse_jitter_brute_force_agreement():
    ds = make_grid()
    report = em.evaluate_grid(ds)
    # independent brute-force recomputation with plain loops
    errs = []
    sq = 0.0
    count = 0
    for i in range(ds.samples.shape[0]):
        mean = [0.0] * 3
        for j in range(ds.samples.shape[1]):
            for k in range(3):
                mean[k] += ds.samples[i, j, k]
        mean = [v / ds.samples.shape[1] for v in mean]
        errs.append(math.dist(mean, list(ds.true_pos[i])))
        for j in range(ds.samples.shape[1]):
            sq += math.dist(list(ds.samples[i, j]), mean) ** 2
            count += 1
    rmse = math.sqrt(sum(e * e for e in errs) / len(errs))
    jitter = math.sqrt(sq / count)
    assert report.rmse == pytest.approx(rmse, abs=1e-9)
    assert report.jitter == pytest.approx(jitter, abs=1e-9)


def test_jitter_magnitude():
    ds = make_grid(n=40, m=200)
    report = em.evaluate_grid(ds)
    assert report.jitter == pytest.approx(0.07, rel=0.1)


def test_ideal_branch_bias_statistics():
    model = SensorModel(indicator=0.02, jitter_sd=0.0, seed=5)
    mags = [np.linalg.norm(model.draw_bias(3)) for _ in range(20_000)]
    # |N(0.575, 0.211)| with negligible fold-over mass below zero
    assert np.mean(mags) == pytest.approx(0.575, rel=0.05)
    assert np.std(mags) == pytest.approx(0.211, rel=0.10)


def test_noisy_branch_is_deterministic_in_indicator():
    model = SensorModel(indicator=0.5, seed=0)
    assert model.bias_magnitude() == pytest.approx(9.591 * 0.5 + 0.051)
    model2 = SensorModel(indicator=2.0, seed=99)
    assert model2.bias_magnitude() == pytest.approx(9.591 * 2.0 + 0.051)


def test_branch_selection_at_threshold():
    # at the threshold the ideal branch applies; just above, the linear one
    at = SensorModel(indicator=0.0547, jitter_sd=0.0, seed=1)
    above = SensorModel(indicator=0.0548, jitter_sd=0.0, seed=1)
    assert above.bias_magnitude() == pytest.approx(9.591 * 0.0548 + 0.051)
    mags = {at.bias_magnitude() for _ in range(5)}
    assert len(mags) > 1  # stochastic branch


def test_reading_bias_constant_within_run():
    model = SensorModel(indicator=0.02, jitter_sd=0.0, seed=2)
    r1 = em.simulate_reading([0.0, 0.0], model)
    r2 = em.simulate_reading([10.0, -5.0], model)
    assert np.allclose(r1, r2 - [10.0, -5.0])


def test_fit_roundtrip():
    rng = np.random.default_rng(0)
    ind = np.concatenate([rng.uniform(0.0, 0.0547, 200),
                          rng.uniform(0.06, 2.0, 200)])
    err = np.where(ind <= 0.0547,
                   np.abs(rng.normal(0.575, 0.211, ind.size)),
                   9.591 * ind + 0.051 + rng.normal(0.0, 0.05, ind.size))
    fit = em.fit_error_indicator(ind, err, 0.0547)
    assert fit.slope == pytest.approx(9.591, rel=0.05)
    assert fit.ideal_mean == pytest.approx(0.575, rel=0.10)


def test_fit_needs_points_both_sides():
    with pytest.raises(ConfigurationError):
        em.fit_error_indicator([0.01, 0.02, 0.03], [1.0, 1.0, 1.0], 0.0547)


def test_indicator_threshold_nearest_rank():
    samples = np.arange(1, 101, dtype=float)  # 1..100
    assert em.indicator_threshold(samples, 95.0) == 95.0
    assert em.indicator_threshold(samples, 50.0) == 50.0
    assert em.indicator_threshold([5.0], 95.0) == 5.0
    with pytest.raises(ConfigurationError):
        em.indicator_threshold([], 95.0)
    with pytest.raises(ConfigurationError):
        em.indicator_threshold([1.0], 100.0)


def test_grid_dataset_validation():
    with pytest.raises(ConfigurationError):
        GridDataset(true_pos=np.zeros((2, 3)), samples=np.zeros((3, 4, 3)),
                    indicators=np.zeros((3, 4)))
    with pytest.raises(ConfigurationError):
        em.dataset_jitter(GridDataset(np.zeros((2, 3)), np.zeros((2, 1, 3)),
                                      np.zeros((2, 1))))


def test_synth_determinism():
    a = make_grid(seed=7)
    b = make_grid(seed=7)
    assert np.array_equal(a.samples, b.samples)


@given(seed=st.integers(0, 1000))
@settings(max_examples=20, deadline=None)
def test_errors_nonnegative(seed):
    report = em.evaluate_grid(make_grid(seed=seed, n=4, m=10))
    assert np.all(report.errors >= 0.0)
    assert report.rmse >= max(0.0, float(np.mean(report.errors)) * 0.99)
