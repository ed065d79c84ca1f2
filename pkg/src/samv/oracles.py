"""Brute-force Kronecker-space oracles for small arrays (M <= 4).

These evaluate the vectorized forms with explicit M^2 x M^2 matrices. They
are slow and memory hungry on purpose: the estimators never call them, the
checks and the ``selftest`` command do.
"""

from __future__ import annotations

import numpy as np

from .array import DomainError

MAX_ORACLE_SENSORS = 4


def _check_size(M: int):
    if M > MAX_ORACLE_SENSORS:
        raise DomainError(f"Kronecker oracles are limited to M <= {MAX_ORACLE_SENSORS}, got {M}")


def vec(X: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(X).reshape(-1, order="F")


def kron_steering(a: np.ndarray) -> np.ndarray:
    """``conj(a) kron a`` which equals ``vec(a a^H)``."""
    return np.kron(a.conj(), a)


def kron_covariance(R: np.ndarray) -> np.ndarray:
    """Asymptotic covariance ``conj(R) kron R`` of ``vec(R_N)``."""
    _check_size(R.shape[0])
    return np.kron(R.conj(), R)


def kron_forms(R: np.ndarray, R_N: np.ndarray, abar: np.ndarray) -> tuple[float, float]:
    """``abar^H C^-1 vec(R_N)`` and ``abar^H C^-1 abar`` by explicit inversion."""
    C_inv = np.linalg.inv(kron_covariance(R))
    r_N = vec(R_N)
    num = abar.conj() @ C_inv @ r_N
    den = abar.conj() @ C_inv @ abar
    return num, den


def wls_cost_explicit(R: np.ndarray, R_N: np.ndarray, abar: np.ndarray, current_p: float, candidate_p) -> np.ndarray:
    """``[r_N - p abar]^H C'^-1 [r_N - p abar]`` with ``C' = C - current_p^2 abar abar^H``."""
    C = kron_covariance(R)
    C_prime = C - current_p**2 * np.outer(abar, abar.conj())
    C_prime_inv = np.linalg.inv(C_prime)
    r_N = vec(R_N)
    p = np.atleast_1d(np.asarray(candidate_p, dtype=float))
    resid = r_N[:, None] - abar[:, None] * p[None, :]
    cost = np.einsum("ik,ij,jk->k", resid.conj(), C_prime_inv, resid).real
    return cost if np.ndim(candidate_p) else float(cost[0])


def brute_force_argmin(fun, lo: float, hi: float, points: int = 2001, rounds: int = 8) -> float:
    """Zoom-in grid search for the minimizer of a 1-D function on [lo, hi]."""
    for _ in range(rounds):
        xs = np.linspace(lo, hi, points)
        vals = np.asarray(fun(xs))
        i = int(np.argmin(vals))
        span = (hi - lo) / (points - 1)
        lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, points - 1)]
        if span == 0:
            break
    return float(xs[i])
