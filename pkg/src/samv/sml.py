"""Grid-free refinement of source angles by per-source stochastic ML (SAMV-SML).

Each source angle is refined on its own by minimizing the part of the
Gaussian negative log-likelihood that depends on it, with the remaining
sources and the noise folded into an interference covariance ``Q_k``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .amv import IterationControl
from .array import ArrayGeometry, DomainError, SteeringDictionary, steering_matrix, steering_vector
from .covariance import covariance_matrix, dense_forms, hermitian_inverse, ml_cost, noise_forms
from .peaks import local_maxima, pick_peaks
from .sparse import SamvVariant, samv_estimate, samv_noise, variant_powers

log = logging.getLogger(__name__)

ANGLE_TOL = 1e-4
MAX_SWEEPS = 50
# largest angle the bracket may reach inside [0, 180)
_TOP = 180.0 - 1e-9


class PeakDetectionError(DomainError):
    pass


@dataclass
class RefinementProblem:
    """Continuous source angles and powers plus the noise, data and array."""

    thetas: np.ndarray
    powers: np.ndarray
    sigma: float
    R_N: np.ndarray
    geometry: ArrayGeometry

    def __post_init__(self):
        self.thetas = np.asarray(self.thetas, dtype=float).copy()
        self.powers = np.asarray(self.powers, dtype=float).copy()
        if self.thetas.size == 0:
            raise DomainError("refinement needs at least one active source")
        if np.unique(self.thetas).size != self.thetas.size:
            raise DomainError("active source angles must be distinct")

    def covariance(self) -> np.ndarray:
        A = steering_matrix(self.geometry, self.thetas)
        return covariance_matrix(A, self.powers, self.sigma)

    def interference(self, k: int) -> np.ndarray:
        """``Q_k``: covariance of every other source plus noise."""
        keep = np.arange(self.thetas.size) != k
        A = steering_matrix(self.geometry, self.thetas[keep])
        return covariance_matrix(A, self.powers[keep], self.sigma)

    def total_cost(self) -> float:
        return ml_cost(self.covariance(), self.R_N)


def _scalar_cost(geometry: ArrayGeometry, Q_inv: np.ndarray, G: np.ndarray, p: float):
    pos = geometry.position_array

    def cost(theta: float) -> float:
        a = np.exp(1j * np.pi * pos * np.cos(np.deg2rad(theta)))
        b = Q_inv @ a
        alpha1 = np.vdot(a, b).real
        alpha2 = np.vdot(a, G @ a).real
        return float(np.log1p(p * alpha1) - p * alpha2 / (1.0 + p * alpha1))

    return cost


def sml_cost(problem: RefinementProblem, k: int, theta_candidate: float) -> float:
    """Angle-dependent part of the negative log-likelihood for source ``k``.

    With ``alpha1 = a^H Q^-1 a`` and ``alpha2 = a^H Q^-1 R_N Q^-1 a`` this is
    ``ln(1 + p alpha1) - p alpha2 / (1 + p alpha1)``, so the full cost equals a
    term independent of ``theta_k`` plus this value.
    """
    steering_vector(problem.geometry, theta_candidate)  # domain check
    Q_inv, G = _interference_forms(problem, k)
    return _scalar_cost(problem.geometry, Q_inv, G, problem.powers[k])(theta_candidate)


def _interference_forms(problem: RefinementProblem, k: int):
    Q = problem.interference(k)
    w = np.linalg.eigvalsh(Q)
    if w[0] <= 0:
        raise np.linalg.LinAlgError(f"interference covariance of source {k} is singular")
    Q_inv = np.linalg.inv(Q)
    Q_inv = 0.5 * (Q_inv + Q_inv.conj().T)
    return Q_inv, Q_inv @ problem.R_N @ Q_inv


def minimize_scalar(cost, bracket: tuple[float, float], tol: float = ANGLE_TOL) -> tuple[float, float]:
    """Bounded Brent minimization (golden section with parabolic steps)."""
    lo, hi = bracket
    if not lo < hi:
        raise DomainError(f"empty bracket {bracket}")
    res = optimize.minimize_scalar(cost, bounds=(lo, hi), method="bounded", options={"xatol": tol})
    return float(res.x), float(res.fun)


@dataclass
class SmlEstimate:
    angles: np.ndarray
    powers: np.ndarray
    sigma: float
    initial_angles: np.ndarray
    sweeps: int = 0
    converged: bool = False
    padded: bool = False
    # (cost before angle steps, cost after angle steps) per sweep
    cost_history: list[tuple[float, float]] = field(default_factory=list)


def _update_powers(method: str, problem: RefinementProblem) -> None:
    A = steering_matrix(problem.geometry, problem.thetas)
    R = covariance_matrix(A, problem.powers, problem.sigma)
    R_inv, _ = hermitian_inverse(R)
    num, cap = dense_forms(A, R_inv, problem.R_N)
    num = np.maximum(num, 0.0)
    if method == "amv":
        tr_r2rn, tr_r2, tr_r1 = noise_forms(R_inv, problem.R_N)
        powers = np.maximum(num / cap**2 + problem.powers - 1.0 / cap, 0.0)
        sigma = max((tr_r2rn + problem.sigma * tr_r2 - tr_r1) / tr_r2, 0.0)
        floor = 1e-12 * np.trace(problem.R_N).real / problem.R_N.shape[0]
        sigma = max(sigma, floor)
    else:
        powers = variant_powers(SamvVariant.parse(method), problem.powers, num, cap)
        sigma = samv_noise(R_inv, problem.R_N)
    problem.powers = powers
    problem.sigma = float(sigma)


SML_METHODS = ("amv", "samv1", "samv2")


def refine(
    problem: RefinementProblem,
    method: str,
    step: float,
    control: IterationControl = IterationControl(),
    max_sweeps: int = MAX_SWEEPS,
    angle_tol: float = ANGLE_TOL,
) -> tuple[int, bool, list[tuple[float, float]]]:
    """Cyclic per-source refinement of ``problem`` in place.

    Each sweep updates all powers and the noise once with ``method``, then
    minimizes the scalar cost of every source (strongest first) within one
    grid ``step`` of its current angle. Stops when no angle moves more than
    ``angle_tol`` and the powers changed less than ``control.rel_tol``.
    """
    if method not in SML_METHODS:
        raise DomainError(f"unknown SML power update {method!r}; expected one of {SML_METHODS}")
    history = []
    for sweep in range(1, max_sweeps + 1):
        old_powers = problem.powers.copy()
        _update_powers(method, problem)
        before = problem.total_cost()
        moved = 0.0
        order = np.lexsort((problem.thetas, -problem.powers))
        for k in order:
            if problem.powers[k] <= 0:
                continue
            Q_inv, G = _interference_forms(problem, k)
            cost = _scalar_cost(problem.geometry, Q_inv, G, problem.powers[k])
            current = problem.thetas[k]
            lo, hi = max(current - step, 0.0), min(current + step, _TOP)
            theta, value = minimize_scalar(cost, (lo, hi), tol=angle_tol)
            # never accept a step that is worse than staying put
            if value > cost(current):
                theta = current
            others = np.delete(problem.thetas, k)
            if np.any(np.isclose(others, theta, atol=1e-12)):
                theta = current
            moved = max(moved, abs(theta - current))
            problem.thetas[k] = theta
        history.append((before, problem.total_cost()))
        scale = max(np.max(np.abs(problem.powers)), np.finfo(float).tiny)
        power_change = np.max(np.abs(problem.powers - old_powers)) / scale
        if moved < angle_tol and power_change < control.rel_tol:
            return sweep, True, history
    return max_sweeps, False, history


def samv_sml_estimate(
    dictionary: SteeringDictionary,
    R_N: np.ndarray,
    num_sources: int,
    method: str = "samv2",
    control: IterationControl = IterationControl(),
    init=None,
    allow_padding: bool = False,
    max_sweeps: int = MAX_SWEEPS,
) -> SmlEstimate:
    """Refine the strongest ``num_sources`` peaks of a SAMV-2 spectrum off the grid.

    ``init`` may carry a precomputed SAMV-2 :class:`PowerState`; ``method``
    picks the power and noise update used between angle steps (``"amv"``,
    ``"samv1"`` or ``"samv2"``).
    """
    if init is None:
        init, _ = samv_estimate(SamvVariant.SAMV2, dictionary, R_N, control)
    pick = pick_peaks(init.powers, dictionary.grid, num_sources)
    if pick.padded and not allow_padding:
        found = dictionary.grid[local_maxima(init.powers)]
        raise PeakDetectionError(f"asked for {num_sources} sources but the spectrum has local maxima only at {found.tolist()}")
    problem = RefinementProblem(
        thetas=pick.angles,
        powers=init.powers[pick.indices],
        sigma=float(np.mean(init.noise)),
        R_N=R_N,
        geometry=dictionary.geometry,
    )
    sweeps, converged, history = refine(problem, method, dictionary.step, control, max_sweeps=max_sweeps)
    return SmlEstimate(
        angles=problem.thetas,
        powers=problem.powers,
        sigma=problem.sigma,
        initial_angles=pick.angles,
        sweeps=sweeps,
        converged=converged,
        padded=pick.padded,
        cost_history=history,
    )
