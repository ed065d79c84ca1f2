import numpy as np
import pytest

from samv.amv import IterationControl
from samv.array import ArrayGeometry, DomainError, Scenario, Source, build_dictionary, sample_covariance, steering_matrix, synthesize_snapshots
from samv.covariance import covariance_matrix, ml_cost
from samv.harness import snr_to_sigma
from samv.oracles import brute_force_argmin
from samv.sml import PeakDetectionError, RefinementProblem, minimize_scalar, samv_sml_estimate, sml_cost
from samv.sparse import SamvVariant, samv_estimate

G12 = ArrayGeometry.ula(12)


def two_source(snapshots=120, snr_db=20.0):
    powers = [10**0.5, 10**0.3]
    return Scenario(G12, (Source(35.11, powers[0]), Source(50.15, powers[1])), snr_to_sigma(powers, snr_db), snapshots)


def single_source_problem(theta=47.3, p=2.0, sigma=0.05):
    R_N = covariance_matrix(steering_matrix(G12, [theta]), np.array([p]), sigma)
    return RefinementProblem([theta + 0.13], [p], sigma, R_N, G12)


def test_zero_power_cost_is_zero():
    prob = single_source_problem()
    prob.powers[:] = 0.0
    for theta in (10.0, 47.3, 120.0):
        assert sml_cost(prob, 0, theta) == 0.0


def test_single_source_dense_scan():
    prob = single_source_problem()
    scan = np.arange(46.0, 48.5, 0.001)
    costs = [sml_cost(prob, 0, t) for t in scan]
    assert scan[int(np.argmin(costs))] == pytest.approx(47.3, abs=1e-3)


def test_total_cost_minus_scalar_cost_is_constant():
    rng = np.random.default_rng(0)
    sc = two_source()
    R_N = sample_covariance(synthesize_snapshots(sc, rng))
    prob = RefinementProblem([35.2, 50.1], [3.0, 2.0], 0.1, R_N, G12)
    diffs = []
    for theta in rng.uniform(30.0, 40.0, 5):
        thetas = prob.thetas.copy()
        thetas[0] = theta
        L = ml_cost(covariance_matrix(steering_matrix(G12, thetas), prob.powers, prob.sigma), R_N)
        diffs.append(L - sml_cost(prob, 0, theta))
    assert np.ptp(diffs) < 1e-9


def test_cost_domain_and_problem_validation():
    prob = single_source_problem()
    with pytest.raises(DomainError):
        sml_cost(prob, 0, 180.0)
    with pytest.raises(DomainError):
        RefinementProblem([], [], 1.0, np.eye(12), G12)
    with pytest.raises(DomainError):
        RefinementProblem([40.0, 40.0], [1.0, 1.0], 1.0, np.eye(12), G12)


def test_minimize_quadratic():
    x, fx = minimize_scalar(lambda t: (t - 50.0) ** 2, (40.0, 60.0))
    assert x == pytest.approx(50.0, abs=1e-4)
    assert fx < 1e-8


def test_minimize_monotone_segment_ends_near_bound():
    x, _ = minimize_scalar(lambda t: np.cos(np.deg2rad(t)), (0.0, 179.999))
    assert 179.99 < x <= 179.999


def test_minimize_empty_bracket():
    with pytest.raises(DomainError):
        minimize_scalar(lambda t: t, (1.0, 1.0))


def test_minimize_scalar_cost_matches_scan():
    prob = single_source_problem()
    x, _ = minimize_scalar(lambda t: sml_cost(prob, 0, t), (47.0, 47.6))
    oracle = brute_force_argmin(np.vectorize(lambda t: sml_cost(prob, 0, t)), 47.0, 47.6, points=601, rounds=3)
    assert x == pytest.approx(oracle, abs=1e-3)


def test_on_grid_sources_stay_put():
    d = build_dictionary(G12, 0.0, 180.0, 0.2)
    truth = [35.0, 50.2]
    R_N = covariance_matrix(steering_matrix(G12, truth), np.array([3.0, 2.0]), 0.01)
    res = samv_sml_estimate(d, R_N, 2)
    np.testing.assert_allclose(np.sort(res.angles), truth, atol=1e-3)


def test_variants_agree_and_cost_never_rises():
    d = build_dictionary(G12, 0.0, 180.0, 0.2)
    R_N = sample_covariance(synthesize_snapshots(two_source(snr_db=20.0), np.random.default_rng(1)))
    init, _ = samv_estimate(SamvVariant.SAMV2, d, R_N)
    results = {m: samv_sml_estimate(d, R_N, 2, m, init=init) for m in ("amv", "samv1", "samv2")}
    for r in results.values():
        assert r.converged
        for before, after in r.cost_history:
            assert after <= before + 1e-10
    a = np.sort(results["amv"].angles)
    assert np.max(np.abs(np.sort(results["samv2"].angles) - a)) < 0.01


def test_grid_independence():
    R_N = sample_covariance(synthesize_snapshots(two_source(snr_db=25.0), np.random.default_rng(2)))
    coarse = samv_sml_estimate(build_dictionary(G12, 0.0, 180.0, 0.2), R_N, 2)
    fine = samv_sml_estimate(build_dictionary(G12, 0.0, 180.0, 0.1), R_N, 2)
    assert np.max(np.abs(np.sort(coarse.angles) - np.sort(fine.angles))) < 0.01


def test_median_error_at_20db():
    d = build_dictionary(G12, 0.0, 180.0, 0.2)
    sc = two_source(snr_db=20.0)
    ctl = IterationControl(record_states=False)
    errs = []
    for t in range(100):
        R_N = sample_covariance(synthesize_snapshots(sc, np.random.default_rng(1000 + t)))
        res = samv_sml_estimate(d, R_N, 2, control=ctl)
        errs.append(np.abs(np.sort(res.angles) - [35.11, 50.15]))
    assert np.all(np.median(errs, axis=0) < 0.05)


def test_too_few_peaks():
    d = build_dictionary(G12, 0.0, 180.0, 1.0)
    R_N = covariance_matrix(steering_matrix(G12, [60.0]), np.array([5.0]), 0.01)
    init, _ = samv_estimate(SamvVariant.SAMV0, d, R_N)
    with pytest.raises(PeakDetectionError, match="local maxima"):
        samv_sml_estimate(d, R_N, 12, init=init)
    res = samv_sml_estimate(d, R_N, 12, init=init, allow_padding=True, max_sweeps=2)
    assert res.padded
