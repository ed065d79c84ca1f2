"""Iterative asymptotically-minimum-variance (AMV) power and noise estimation.

The AMV fixed-point iteration coincides with the stochastic maximum
likelihood estimator, so the same update doubles as the ML power update.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .array import DomainError, Dictionary
from .covariance import (
    ModelCovariance,
    PowerState,
    SingularCovarianceError,
    assemble_R,
    ml_cost,
    noise_forms,
    quadratic_forms_all,
)


@dataclass(frozen=True)
class IterationControl:
    """Stopping rule shared by all iterative estimators.

    ``clamp=None`` enables clamping of negative AMV updates only when the
    grid is overcomplete (K > M).
    """

    max_iters: int = 1000
    rel_tol: float = 1e-6
    clamp: bool | None = None
    record_states: bool = True

    def __post_init__(self):
        if self.max_iters < 1:
            raise DomainError("max_iters must be at least 1")
        if not self.rel_tol > 0:
            raise DomainError("rel_tol must be positive")

    def clamp_for(self, dictionary: Dictionary) -> bool:
        if self.clamp is None:
            return dictionary.size > dictionary.num_sensors
        return self.clamp


@dataclass
class EstimateTrace:
    states: list[PowerState] = field(default_factory=list)
    ml_cost: list[float] = field(default_factory=list)
    converged: bool = False
    iterations_used: int = 0
    loaded_iterations: int = 0
    breakdown: bool = False


def initialize_power(dictionary: Dictionary, R_N: np.ndarray, nonuniform: bool = False) -> PowerState:
    """Periodogram powers and the average per-sensor energy as noise."""
    A = dictionary.A
    per = np.einsum("ij,ij->j", A.conj(), R_N @ A).real / np.sum(np.abs(A) ** 2, axis=0) ** 2
    sigma = np.trace(R_N).real / R_N.shape[0]
    noise = np.full(R_N.shape[0], sigma) if nonuniform else np.asarray(sigma)
    return PowerState(np.maximum(per, 0.0), noise)


def _amv_target(num, cap, p):
    return num / cap**2 + p - 1.0 / cap


def amv_step(
    dictionary: Dictionary,
    R_N: np.ndarray,
    state: PowerState,
    clamp: bool = True,
    model: ModelCovariance | None = None,
) -> PowerState:
    """One AMV update of all grid powers and the uniform noise variance."""
    if not state.uniform:
        return amv_step_nonuniform(dictionary, R_N, state, clamp=clamp, model=model)
    model = model or assemble_R(dictionary, state)
    num, cap = quadratic_forms_all(dictionary, model.inverse, R_N)
    powers = _amv_target(num, cap, state.powers)
    tr_r2rn, tr_r2, tr_r1 = noise_forms(model.inverse, R_N)
    sigma = (tr_r2rn + float(state.noise) * tr_r2 - tr_r1) / tr_r2
    if clamp:
        powers = np.maximum(powers, 0.0)
        sigma = max(sigma, 0.0)
    return PowerState(powers, np.asarray(sigma))


def amv_step_nonuniform(
    dictionary: Dictionary,
    R_N: np.ndarray,
    state: PowerState,
    clamp: bool = True,
    model: ModelCovariance | None = None,
) -> PowerState:
    """AMV update with per-sensor noise; canonical vectors act as extra grid columns.

    All K + M entries are updated jointly from the same covariance iterate.
    """
    M = dictionary.num_sensors
    if state.uniform:
        state = PowerState(state.powers, np.full(M, float(state.noise)))
    model = model or assemble_R(dictionary, state)
    num, cap = quadratic_forms_all(dictionary, model.inverse, R_N)
    powers = _amv_target(num, cap, state.powers)
    # for a_{K+m} = e_m the forms read the diagonals of R^-1 R_N R^-1 and R^-1
    W = model.inverse
    num_e = np.einsum("ij,jk,ki->i", W, R_N, W).real
    cap_e = np.diag(W).real
    noise = _amv_target(num_e, cap_e, state.noise)
    if clamp:
        powers = np.maximum(powers, 0.0)
        noise = np.maximum(noise, 0.0)
    return PowerState(powers, noise)


StepFunction = Callable[[Dictionary, np.ndarray, PowerState, ModelCovariance], PowerState]


def relative_change(new: PowerState, old: PowerState) -> float:
    """Infinity-norm change of the full state relative to its infinity norm."""
    diff = max(np.max(np.abs(new.powers - old.powers), initial=0.0), np.max(np.abs(new.noise - old.noise)))
    scale = max(
        np.max(new.powers, initial=0.0),
        np.max(old.powers, initial=0.0),
        np.max(np.abs(new.noise)),
        np.max(np.abs(old.noise)),
        np.finfo(float).tiny,
    )
    return float(diff / scale)


def iterate(
    step: StepFunction,
    dictionary: Dictionary,
    R_N: np.ndarray,
    state: PowerState,
    control: IterationControl,
) -> tuple[PowerState, EstimateTrace]:
    """Run ``step`` from ``state`` until the relative change drops below tolerance."""
    trace = EstimateTrace()
    previous = state
    for _ in range(control.max_iters):
        try:
            model = assemble_R(dictionary, state)
        except SingularCovarianceError:
            # every entry was driven to zero; keep the last usable iterate
            trace.breakdown = True
            state = previous
            break
        try:
            trace.ml_cost.append(ml_cost(model.R, R_N, model.inverse))
        except np.linalg.LinAlgError:
            trace.ml_cost.append(float("nan"))
        trace.loaded_iterations += model.loaded
        new = step(dictionary, R_N, state, model)
        trace.iterations_used += 1
        if control.record_states:
            trace.states.append(new)
        change = relative_change(new, state)
        previous, state = state, new
        if not np.isfinite(change):
            break
        if change < control.rel_tol:
            trace.converged = True
            break
    return state, trace


def amv_estimate(
    dictionary: Dictionary,
    R_N: np.ndarray,
    control: IterationControl = IterationControl(),
    nonuniform: bool = False,
    init: PowerState | None = None,
) -> tuple[PowerState, EstimateTrace]:
    """Iterate the AMV update from the periodogram initialization."""
    clamp = control.clamp_for(dictionary)
    state = init if init is not None else initialize_power(dictionary, R_N, nonuniform=nonuniform)

    def step(d, rn, s, model):
        return amv_step(d, rn, s, clamp=clamp, model=model)

    return iterate(step, dictionary, R_N, state, control)
