import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from samv.array import ArrayGeometry, Dictionary, SteeringDictionary
from samv.covariance import (
    PowerState,
    SingularCovarianceError,
    assemble_R,
    hermitian_inverse,
    interference_covariance,
    ml_cost,
    quadratic_forms,
    vectorize_model,
)
from samv.oracles import kron_forms, kron_steering, vec
from samv.selftest import random_instance


def _single(a, p, sigma):
    return Dictionary(np.asarray(a, dtype=complex).reshape(-1, 1)), PowerState([p], sigma)


def test_assemble_two_sensor_example():
    d, s = _single([1, 1], 2.0, 1.0)
    np.testing.assert_allclose(assemble_R(d, s).R, [[3, 2], [2, 3]])


def test_noise_only_is_identity():
    d, s = _single([1, 1], 0.0, 1.0)
    m = assemble_R(d, s)
    np.testing.assert_allclose(m.R, np.eye(2))
    np.testing.assert_allclose(m.inverse, np.eye(2))
    assert not m.loaded


def test_all_zero_state_is_singular():
    d, s = _single([1, 1], 0.0, 0.0)
    with pytest.raises(SingularCovarianceError):
        assemble_R(d, s)


def test_nonuniform_noise_on_diagonal():
    d = Dictionary(np.zeros((3, 1), dtype=complex))
    m = assemble_R(d, PowerState([0.0], [1.0, 2.0, 3.0]))
    np.testing.assert_allclose(m.R, np.diag([1.0, 2.0, 3.0]))


def test_random_state_eigenvalues_above_noise():
    rng = np.random.default_rng(0)
    d, s, _ = random_instance(rng, 4, 6)
    R = assemble_R(d, s).R
    np.testing.assert_allclose(R, R.conj().T, atol=0)
    assert np.linalg.eigvalsh(R).min() >= float(s.noise) - 1e-12


def test_near_singular_gets_loaded():
    d, s = _single([1, 1], 1.0, 0.0)
    m = assemble_R(d, s)
    assert m.loaded
    assert np.all(np.isfinite(m.inverse))


def test_vectorize_examples():
    d, s = _single([1, -1], 1.0, 0.0)
    np.testing.assert_allclose(vectorize_model(d, s), vec(np.array([[1, -1], [-1, 1]])))
    d, s = _single([1, 1], 0.0, 2.0)
    np.testing.assert_allclose(vectorize_model(d, s), [2, 0, 0, 2])


def test_vectorize_matches_assembled_matrix():
    rng = np.random.default_rng(1)
    d, s, _ = random_instance(rng, 3, 4)
    np.testing.assert_allclose(vectorize_model(d, s), vec(assemble_R(d, s).R), atol=1e-12)


def test_interference_examples():
    d, s = _single([1, 1], 2.0, 1.0)
    Q, Q_inv = interference_covariance(d, s, 0)
    np.testing.assert_allclose(Q, np.eye(2), atol=1e-15)
    np.testing.assert_allclose(Q_inv, np.eye(2), atol=1e-12)
    d, s = _single([1, 1], 0.0, 1.5)
    Q, _ = interference_covariance(d, s, 0)
    np.testing.assert_allclose(Q, assemble_R(d, s).R)


def test_interference_inverse_matches_direct():
    rng = np.random.default_rng(2)
    for _ in range(20):
        d, s, _ = random_instance(rng, 4, 5)
        k = int(rng.integers(0, 5))
        Q, Q_inv = interference_covariance(d, s, k)
        assert np.linalg.norm(Q_inv - np.linalg.inv(Q)) < 1e-10 * np.linalg.norm(Q_inv)


def test_identity_forms():
    d = SteeringDictionary(ArrayGeometry.ula(5), np.array([40.0]))
    num, den = quadratic_forms(d, np.eye(5), np.eye(5), 0)
    assert num == pytest.approx(5.0)
    assert den == pytest.approx(25.0)


def test_forms_match_kronecker_oracle():
    rng = np.random.default_rng(4)
    d, s, R_N = random_instance(rng, 2, 3)
    m = assemble_R(d, s)
    for k in range(3):
        num, den = quadratic_forms(d, m.inverse, R_N, k)
        knum, kden = kron_forms(m.R, R_N, kron_steering(d.A[:, k]))
        assert num == pytest.approx(knum, rel=1e-10)
        assert den == pytest.approx(kden, rel=1e-10)
    num, den = quadratic_forms(d, m.inverse, R_N, 3)
    knum, kden = kron_forms(m.R, R_N, vec(np.eye(2)).astype(complex))
    assert num == pytest.approx(knum, rel=1e-10)
    assert den == pytest.approx(kden, rel=1e-10)


def test_ml_cost_at_truth():
    R = np.array([[2.0, 0.5], [0.5, 1.0]])
    assert ml_cost(R, R) == pytest.approx(np.log(np.linalg.det(R)) + 2.0)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 5), seed=st.integers(0, 2**31))
def test_hermitian_inverse_property(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    R = X @ X.conj().T + 0.1 * np.eye(n)
    inv, loaded = hermitian_inverse(R)
    if not loaded:
        np.testing.assert_allclose(inv @ R, np.eye(n), atol=1e-8)
    np.testing.assert_array_equal(inv, inv.conj().T)


@settings(max_examples=40, deadline=None)
@given(M=st.integers(2, 4), K=st.integers(1, 6), seed=st.integers(0, 2**31))
def test_forms_are_real_and_positive(M, K, seed):
    rng = np.random.default_rng(seed)
    d, s, R_N = random_instance(rng, M, K)
    m = assemble_R(d, s)
    for k in range(K + 1):
        num, den = quadratic_forms(d, m.inverse, R_N, k)
        assert num >= -1e-12 and den > 0
