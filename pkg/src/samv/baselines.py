"""Reference estimators: periodogram, IAA, MUSIC, and zero-order SNR approximations of SAMV."""

from __future__ import annotations

import enum

import numpy as np

from .amv import IterationControl, relative_change
from .array import DomainError, Dictionary, sample_covariance
from .covariance import PowerState, SingularCovarianceError, SINGULAR_RATIO, hermitian_inverse, quadratic_forms_all
from .sparse import SamvVariant, variant_powers

IAA_ITERATIONS = 15


class SnrRegime(enum.Enum):
    LOW = "low"
    HIGH = "high"


def per_estimate(dictionary: Dictionary, R_N: np.ndarray) -> np.ndarray:
    """Periodogram (matched filter) powers ``a^H R_N a / |a|^4``."""
    A = dictionary.A
    quad = np.einsum("ij,ij->j", A.conj(), R_N @ A).real
    return np.maximum(quad, 0.0) / np.sum(np.abs(A) ** 2, axis=0) ** 2


def iaa_estimate(
    dictionary: Dictionary,
    snapshots: np.ndarray,
    control: IterationControl = IterationControl(max_iters=IAA_ITERATIONS),
) -> np.ndarray:
    """Iterative adaptive approach powers, mean of squared waveform estimates.

    The IAA covariance ``A diag(p) A^H`` carries no noise term and can be
    singular; it is diagonally loaded when that happens.
    """
    Y = np.atleast_2d(snapshots)
    if Y.shape[0] != dictionary.num_sensors:
        Y = Y.T
    A = dictionary.A
    p = per_estimate(dictionary, sample_covariance(Y))
    for _ in range(control.max_iters):
        R_bar = (A * p) @ A.conj().T
        R_inv, _ = hermitian_inverse(R_bar)
        B = R_inv @ A
        cap = np.einsum("ij,ij->j", A.conj(), B).real
        X = (B.conj().T @ Y) / cap[:, None]
        p_new = np.mean(np.abs(X) ** 2, axis=1)
        change = relative_change(PowerState(p_new, 0.0), PowerState(p, 0.0))
        p = p_new
        if change < control.rel_tol:
            break
    return p


def music_pseudospectrum(dictionary: Dictionary, R_N: np.ndarray, num_sources: int) -> np.ndarray:
    """``1 / |E_n^H a|^2`` with ``E_n`` the noise-subspace eigenvectors of ``R_N``."""
    M = dictionary.num_sensors
    if not 0 <= num_sources < M:
        raise DomainError(f"MUSIC needs 0 <= num_sources < M={M}, got {num_sources}")
    _, V = np.linalg.eigh(0.5 * (R_N + R_N.conj().T))
    En = V[:, : M - num_sources]
    proj = np.sum(np.abs(En.conj().T @ dictionary.A) ** 2, axis=0)
    return 1.0 / np.maximum(proj, np.finfo(float).tiny)


def asymptotic_step(
    variant: SamvVariant,
    regime: SnrRegime,
    dictionary: Dictionary,
    R_N: np.ndarray,
    state: PowerState,
) -> PowerState:
    """Zero-order low- or high-SNR approximation of one SAMV update.

    Low SNR replaces ``R^-1`` by ``I / sigma`` so every update becomes a scaled
    periodogram. High SNR replaces ``R`` by the noise-free ``A P A^H``.
    """
    variant = SamvVariant.parse(variant)
    regime = SnrRegime(regime)
    A = dictionary.A
    if regime is SnrRegime.LOW:
        sigma = float(np.mean(state.noise))
        norms = np.sum(np.abs(A) ** 2, axis=0)
        p_per = per_estimate(dictionary, R_N)
        if variant is SamvVariant.SAMV0:
            powers = (norms / sigma) ** 2 * state.powers**2 * p_per
        elif variant is SamvVariant.SAMV1:
            powers = p_per
        else:
            powers = (norms / sigma) * state.powers * p_per
        noise = np.trace(R_N).real / R_N.shape[0]
        return PowerState(powers, np.asarray(noise))

    R_bar = (A * state.powers) @ A.conj().T
    R_bar = 0.5 * (R_bar + R_bar.conj().T)
    w = np.linalg.eigvalsh(R_bar)
    if w[0] <= SINGULAR_RATIO * max(w[-1], np.finfo(float).tiny):
        raise SingularCovarianceError("noise-free covariance is singular; the high-SNR approximation needs it invertible")
    R_inv = np.linalg.inv(R_bar)
    num, cap = quadratic_forms_all(dictionary, R_inv, R_N)
    powers = variant_powers(variant, state.powers, np.maximum(num, 0.0), cap)
    R_inv2 = R_inv @ R_inv
    noise = np.einsum("ij,ji->", R_inv2, R_N).real / np.trace(R_inv2).real
    return PowerState(powers, np.asarray(noise))
