"""Model covariance assembly and the reduced quadratic forms shared by all estimators."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .array import Dictionary, DomainError

log = logging.getLogger(__name__)

# smallest eigenvalue below this fraction of the largest triggers diagonal loading
SINGULAR_RATIO = 1e-12
LOADING = 1e-10


class SingularCovarianceError(np.linalg.LinAlgError):
    pass


@dataclass
class PowerState:
    """Signal powers on the grid plus uniform (scalar) or per-sensor noise."""

    powers: np.ndarray
    noise: np.ndarray

    def __post_init__(self):
        self.powers = np.asarray(self.powers, dtype=float).ravel()
        self.noise = np.asarray(self.noise, dtype=float)
        if self.noise.ndim > 1:
            raise DomainError("noise must be a scalar or a per-sensor vector")

    @property
    def uniform(self) -> bool:
        return self.noise.ndim == 0

    def noise_diagonal(self, num_sensors: int) -> np.ndarray:
        return np.broadcast_to(self.noise, (num_sensors,)).astype(float)

    def vector(self) -> np.ndarray:
        """Full parameter vector ``[p_1..p_K, noise...]``."""
        return np.concatenate([self.powers, np.atleast_1d(self.noise)])

    def copy(self) -> "PowerState":
        return PowerState(self.powers.copy(), self.noise.copy())


def hermitian_inverse(R: np.ndarray) -> tuple[np.ndarray, bool]:
    """Inverse of a Hermitian matrix through its eigendecomposition.

    Returns ``(inverse, loaded)``; ``loaded`` is True when the matrix was
    near-singular and a diagonal loading of ``1e-10 * tr(R)/M`` was added.
    """
    R = 0.5 * (R + R.conj().T)
    if not np.all(np.isfinite(R)) or not np.trace(R).real > 0:
        raise SingularCovarianceError("covariance has no positive diagonal contribution")
    w, V = np.linalg.eigh(R)
    scale = max(abs(w[-1]), np.finfo(float).tiny)
    loaded = bool(w[0] < SINGULAR_RATIO * scale)
    if loaded:
        load = LOADING * max(np.trace(R).real, np.finfo(float).tiny) / R.shape[0]
        w = np.maximum(w, 0.0) + load
        log.debug("near-singular covariance, loading %.3g", load)
    inv = (V / w) @ V.conj().T
    return 0.5 * (inv + inv.conj().T), loaded


@dataclass
class ModelCovariance:
    R: np.ndarray
    inverse: np.ndarray
    loaded: bool = False


def covariance_matrix(A: np.ndarray, powers: np.ndarray, noise) -> np.ndarray:
    """``A diag(p) A^H + diag(noise)`` for arbitrary steering columns."""
    R = (A * powers) @ A.conj().T
    R = 0.5 * (R + R.conj().T)
    R[np.diag_indices_from(R)] += np.broadcast_to(noise, (A.shape[0],))
    return R


def assemble_R(dictionary: Dictionary, state: PowerState) -> ModelCovariance:
    if state.powers.size != dictionary.size:
        raise DomainError(f"state has {state.powers.size} powers for a {dictionary.size}-point grid")
    if not state.uniform and state.noise.size != dictionary.num_sensors:
        raise DomainError("nonuniform noise vector length must equal the sensor count")
    R = dictionary.covariance(state.powers)
    R[np.diag_indices_from(R)] += state.noise_diagonal(dictionary.num_sensors)
    inv, loaded = hermitian_inverse(R)
    return ModelCovariance(R, inv, loaded)


def vectorize_model(dictionary: Dictionary, state: PowerState) -> np.ndarray:
    """``S p`` with ``S = [conj(a_k) kron a_k ..., noise columns]`` (column-stacking vec).

    Nonuniform noise uses one column ``vec(e_m e_m^T)`` per sensor.
    """
    A = dictionary.A
    M = A.shape[0]
    S_signal = np.einsum("ik,jk->ijk", A, A.conj()).reshape(M * M, -1, order="F")
    noise = state.noise_diagonal(M)
    vec_noise = np.zeros(M * M)
    vec_noise[:: M + 1] = noise
    return S_signal @ state.powers + vec_noise


def quadratic_forms_all(dictionary: Dictionary, R_inv: np.ndarray, R_N: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per grid column: ``a^H R^-1 R_N R^-1 a`` and ``a^H R^-1 a`` (both real)."""
    G = R_inv @ R_N @ R_inv
    return dictionary.column_forms(0.5 * (G + G.conj().T)), dictionary.column_forms(R_inv)


def dense_forms(A: np.ndarray, R_inv: np.ndarray, R_N: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Same forms as :func:`quadratic_forms_all` for explicit columns ``A``."""
    B = R_inv @ A
    num = np.einsum("ij,ij->j", B.conj(), R_N @ B).real
    cap = np.einsum("ij,ij->j", A.conj(), B).real
    return num, cap


def quadratic_forms(dictionary: Dictionary, R_inv: np.ndarray, R_N: np.ndarray, k: int) -> tuple[float, float]:
    """Numerator ``a_k^H R^-1 R_N R^-1 a_k`` and denominator ``(a_k^H R^-1 a_k)^2``.

    ``k == K`` (one past the last grid index) selects the noise column, for
    which the forms reduce to ``tr(R^-2 R_N)`` and ``tr(R^-2)``.
    """
    K = dictionary.size
    if k == K:
        num, den, _ = noise_forms(R_inv, R_N)
        return num, den
    if not 0 <= k < K:
        raise DomainError(f"grid index {k} out of range")
    num, cap = dense_forms(dictionary.A[:, k : k + 1], R_inv, R_N)
    return float(num[0]), float(cap[0] ** 2)


def noise_forms(R_inv: np.ndarray, R_N: np.ndarray) -> tuple[float, float, float]:
    """``tr(R^-2 R_N)``, ``tr(R^-2)`` and ``tr(R^-1)``."""
    R_inv2 = R_inv @ R_inv
    return (
        float(np.einsum("ij,ji->", R_inv2, R_N).real),
        float(np.einsum("ij,ji->", R_inv, R_inv).real),
        float(np.trace(R_inv).real),
    )


def interference_covariance(
    dictionary: Dictionary, state: PowerState, k: int, model: ModelCovariance | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """``Q_k = R - p_k a_k a_k^H`` and its inverse from a rank-one update of ``R^-1``."""
    if not 0 <= k < dictionary.size:
        raise DomainError(f"grid index {k} out of range")
    model = model or assemble_R(dictionary, state)
    a = dictionary.A[:, k]
    p = state.powers[k]
    Q = model.R - p * np.outer(a, a.conj())
    b = model.inverse @ a
    denom = 1.0 - p * np.vdot(a, b).real
    if denom <= 1e-14:
        raise SingularCovarianceError(f"interference covariance for grid index {k} is singular")
    Q_inv = model.inverse + (p / denom) * np.outer(b, b.conj())
    return Q, Q_inv


def ml_cost(R: np.ndarray, R_N: np.ndarray, R_inv: np.ndarray | None = None) -> float:
    """Stochastic negative log-likelihood ``ln det R + tr(R^-1 R_N)``."""
    sign, logdet = np.linalg.slogdet(R)
    if sign.real <= 0:
        raise SingularCovarianceError("model covariance is not positive definite")
    if R_inv is None:
        R_inv = np.linalg.inv(R)
    return float(logdet + np.einsum("ij,ji->", R_inv, R_N).real)
