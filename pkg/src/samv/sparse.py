"""Sparse SAMV power updates (SAMV-0, SAMV-1, SAMV-2) and their shared noise update."""

from __future__ import annotations

import enum

import numpy as np

from .amv import EstimateTrace, IterationControl, initialize_power, iterate
from .array import DomainError, Dictionary
from .covariance import ModelCovariance, PowerState, assemble_R, noise_forms, quadratic_forms_all
from .oracles import MAX_ORACLE_SENSORS, kron_steering, vec, wls_cost_explicit

# noise never drops below this fraction of tr(R_N)/M
NOISE_FLOOR = 1e-12
# SAMV-0 initial powers are floored at this fraction of the largest one
INIT_FLOOR = 1e-16


class SamvVariant(enum.Enum):
    SAMV0 = "samv0"
    SAMV1 = "samv1"
    SAMV2 = "samv2"

    @classmethod
    def parse(cls, value) -> "SamvVariant":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("-", "").replace("_", "")
        for v in cls:
            if v.value == key:
                return v
        raise DomainError(f"unknown SAMV variant {value!r}")


def variant_powers(variant: SamvVariant, powers: np.ndarray, num: np.ndarray, cap: np.ndarray) -> np.ndarray:
    """Apply one of the three sparse update rules given the reduced quadratic forms."""
    if variant is SamvVariant.SAMV0:
        return powers**2 * num
    if variant is SamvVariant.SAMV1:
        return num / cap**2
    return powers * num / cap


def samv_noise(R_inv: np.ndarray, R_N: np.ndarray) -> float:
    """Uniform noise update ``tr(R^-2 R_N) / tr(R^-2)``, floored to keep R invertible."""
    tr_r2rn, tr_r2, _ = noise_forms(R_inv, R_N)
    floor = NOISE_FLOOR * np.trace(R_N).real / R_N.shape[0]
    return max(tr_r2rn / tr_r2, floor)


def samv_noise_nonuniform(
    dictionary: Dictionary,
    R_N: np.ndarray,
    state: PowerState,
    model: ModelCovariance | None = None,
) -> np.ndarray:
    """Per-sensor noise ``(R^-1 R_N R^-1)_mm / ((R^-1)_mm)^2``."""
    if state.uniform:
        state = PowerState(state.powers, np.full(dictionary.num_sensors, float(state.noise)))
    model = model or assemble_R(dictionary, state)
    W = model.inverse
    num = np.einsum("ij,jk,ki->i", W, R_N, W).real
    cap = np.diag(W).real
    floor = NOISE_FLOOR * np.trace(R_N).real / R_N.shape[0]
    return np.maximum(num / cap**2, floor)


def samv_step(
    variant: SamvVariant,
    dictionary: Dictionary,
    R_N: np.ndarray,
    state: PowerState,
    model: ModelCovariance | None = None,
) -> PowerState:
    """One SAMV iteration: every grid power and the noise from the same ``R``."""
    variant = SamvVariant.parse(variant)
    model = model or assemble_R(dictionary, state)
    num, cap = quadratic_forms_all(dictionary, model.inverse, R_N)
    # roundoff can leave num a hair below zero
    num = np.maximum(num, 0.0)
    powers = variant_powers(variant, state.powers, num, cap)
    if state.uniform:
        noise = np.asarray(samv_noise(model.inverse, R_N))
    else:
        noise = samv_noise_nonuniform(dictionary, R_N, state, model)
    return PowerState(powers, noise)


def samv_estimate(
    variant: SamvVariant,
    dictionary: Dictionary,
    R_N: np.ndarray,
    control: IterationControl = IterationControl(),
    nonuniform: bool = False,
    init: PowerState | None = None,
) -> tuple[PowerState, EstimateTrace]:
    """Iterate a SAMV variant from the periodogram initialization.

    Works for any snapshot count, including a single snapshot, since ``R_N``
    is never inverted.
    """
    variant = SamvVariant.parse(variant)
    state = init if init is not None else initialize_power(dictionary, R_N, nonuniform=nonuniform)
    if variant is SamvVariant.SAMV0 and init is None:
        peak = state.powers.max(initial=0.0)
        state = PowerState(np.maximum(state.powers, INIT_FLOOR * peak), state.noise)

    def step(d, rn, s, model):
        return samv_step(variant, d, rn, s, model)

    return iterate(step, dictionary, R_N, state, control)


def wls_cost(dictionary: Dictionary, R_N: np.ndarray, state: PowerState, k: int, candidate_p) -> float:
    """Weighted least-squares cost whose minimizer is the SAMV-1 update of entry ``k``.

    Evaluated with explicit Kronecker matrices, so only small arrays are
    allowed. ``k == K`` selects the noise column ``vec(I)``.
    """
    M = dictionary.num_sensors
    if M > MAX_ORACLE_SENSORS:
        raise DomainError(f"wls_cost is limited to M <= {MAX_ORACLE_SENSORS}")
    if not state.uniform:
        raise DomainError("wls_cost supports uniform noise only")
    model = assemble_R(dictionary, state)
    if k == dictionary.size:
        abar = vec(np.eye(M)).astype(complex)
        current = float(state.noise)
    elif 0 <= k < dictionary.size:
        abar = kron_steering(dictionary.A[:, k])
        current = state.powers[k]
    else:
        raise DomainError(f"index {k} out of range")
    return wls_cost_explicit(model.R, R_N, abar, current, candidate_p)
