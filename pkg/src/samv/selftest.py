"""Oracle and identity suites run by ``samv selftest``.

Each suite draws random small instances from a seeded generator, evaluates
a production code path and an independent brute-force counterpart, and
reports the worst relative discrepancy against its tolerance.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .amv import IterationControl, amv_estimate, amv_step
from .array import ArrayGeometry, Scenario, Source, SteeringDictionary, sample_covariance, synthesize_snapshots
from .covariance import PowerState, assemble_R, interference_covariance, noise_forms, quadratic_forms, vectorize_model
from .oracles import kron_forms, kron_steering, vec
from .sparse import SamvVariant, samv_step, wls_cost


@dataclass
class CheckResult:
    name: str
    worst: float
    tol: float
    instances: int
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.worst) and self.worst <= self.tol)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: worst {self.worst:.3g} (tol {self.tol:g}, {self.instances} instances, {self.seconds:.2f}s)"


def _rel(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def random_instance(rng: np.random.Generator, M: int, K: int, snapshots: int | None = None):
    """Random grid, positive state and sample covariance for an M-sensor ULA."""
    grid = np.sort(rng.choice(np.arange(0.0, 180.0, 0.5), size=K, replace=False))
    dictionary = SteeringDictionary(ArrayGeometry.ula(M), grid)
    state = PowerState(rng.uniform(0.1, 3.0, K), np.asarray(rng.uniform(0.2, 2.0)))
    N = snapshots or M + 3
    Y = (rng.standard_normal((M, N)) + 1j * rng.standard_normal((M, N))) * rng.uniform(0.5, 2.0, (M, 1))
    R_N = Y @ Y.conj().T / N
    return dictionary, state, 0.5 * (R_N + R_N.conj().T)


def _crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def kronecker_identities(seed: int = 0, instances: int = 100, tol: float = 1e-10) -> list[CheckResult]:
    """Vectorization, Kronecker and quadratic-form reductions on random M <= 4 instances."""
    rng = np.random.default_rng(seed)
    worst = {
        "vec(R) = S p": 0.0,
        "vec(ABC) = (C^T kron A) vec(B)": 0.0,
        "mixed product of Kronecker products": 0.0,
        "steering form numerator a^H R^-1 R_N R^-1 a": 0.0,
        "steering form denominator (a^H R^-1 a)^2": 0.0,
        "noise form tr(R^-2 R_N)": 0.0,
        "noise form tr(R^-2)": 0.0,
        "interference inverse by rank-one downdate": 0.0,
        "det(I + AB) = det(I + BA)": 0.0,
    }
    t0 = time.perf_counter()
    for _ in range(instances):
        M = int(rng.integers(2, 5))
        K = int(rng.integers(1, 6))
        d, state, R_N = random_instance(rng, M, K)
        model = assemble_R(d, state)
        worst["vec(R) = S p"] = max(worst["vec(R) = S p"], _rel(vectorize_model(d, state), vec(model.R)))

        A, B, C = _crandn(rng, M, M), _crandn(rng, M, M), _crandn(rng, M, M)
        worst["vec(ABC) = (C^T kron A) vec(B)"] = max(
            worst["vec(ABC) = (C^T kron A) vec(B)"], _rel(vec(A @ B @ C), np.kron(C.T, A) @ vec(B))
        )
        D = _crandn(rng, M, M)
        key = "mixed product of Kronecker products"
        worst[key] = max(worst[key], _rel(np.kron(A, B) @ np.kron(C, D), np.kron(A @ C, B @ D)))

        k = int(rng.integers(0, K))
        num, den = quadratic_forms(d, model.inverse, R_N, k)
        knum, kden = kron_forms(model.R, R_N, kron_steering(d.A[:, k]))
        worst["steering form numerator a^H R^-1 R_N R^-1 a"] = max(
            worst["steering form numerator a^H R^-1 R_N R^-1 a"], _rel(num, knum)
        )
        worst["steering form denominator (a^H R^-1 a)^2"] = max(worst["steering form denominator (a^H R^-1 a)^2"], _rel(den, kden))

        nnum, nden = quadratic_forms(d, model.inverse, R_N, K)
        knum, kden = kron_forms(model.R, R_N, vec(np.eye(M)).astype(complex))
        worst["noise form tr(R^-2 R_N)"] = max(worst["noise form tr(R^-2 R_N)"], _rel(nnum, knum))
        worst["noise form tr(R^-2)"] = max(worst["noise form tr(R^-2)"], _rel(nden, kden))

        Q, Q_inv = interference_covariance(d, state, k, model)
        key = "interference inverse by rank-one downdate"
        worst[key] = max(worst[key], _rel(Q_inv, np.linalg.inv(Q)))

        u, v = _crandn(rng, M, 1), _crandn(rng, 1, M)
        key = "det(I + AB) = det(I + BA)"
        worst[key] = max(worst[key], _rel(np.linalg.det(np.eye(M) + u @ v), np.linalg.det(np.eye(1) + v @ u)))
    dt = time.perf_counter() - t0
    return [CheckResult(name, w, tol, instances, dt / len(worst)) for name, w in worst.items()]


def ml_minimizer(dictionary, R_N, state, k) -> float:
    """Minimizer of the likelihood over ``p_k`` alone, from an explicitly inverted ``Q_k``."""
    a = dictionary.A[:, k]
    R = assemble_R(dictionary, state).R
    Q = R - state.powers[k] * np.outer(a, a.conj())
    Q_inv = np.linalg.inv(Q)
    b = Q_inv @ a
    num = np.vdot(b, (R_N - Q) @ b).real
    return float(num / np.vdot(a, b).real ** 2)


def ml_equivalence(seed: int = 0, instances: int = 50, tol: float = 1e-9, M: int = 6, K: int = 4) -> CheckResult:
    """The unclamped AMV update equals the per-entry ML minimizer."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    t0 = time.perf_counter()
    for _ in range(instances):
        d, state, R_N = random_instance(rng, M, K)
        update = amv_step(d, R_N, state, clamp=False)
        oracle = np.array([ml_minimizer(d, R_N, state, k) for k in range(K)])
        worst = max(worst, _rel(update.powers, oracle))
    return CheckResult("AMV update equals the ML minimizer over each p_k", worst, tol, instances, time.perf_counter() - t0)


def ml_fixed_point(seed: int = 0, instances: int = 10, tol: float = 1e-8, M: int = 6, K: int = 4) -> CheckResult:
    """Converged AMV estimates are stationary under the ML minimizer map."""
    rng = np.random.default_rng(seed + 1)
    worst = 0.0
    t0 = time.perf_counter()
    # the joint unclamped update can overshoot into an indefinite R from the
    # periodogram start; clamping avoids that and the limit here is interior
    control = IterationControl(max_iters=20000, rel_tol=1e-13, clamp=True, record_states=False)
    geometry = ArrayGeometry.ula(M)
    d = SteeringDictionary(geometry, np.linspace(20.0, 160.0, K))
    for i in range(instances):
        # data drawn from the model itself, so the ML powers are positive
        truth = Scenario(geometry, tuple(Source(t, p) for t, p in zip(d.grid, rng.uniform(0.5, 3.0, K))), 1.0, 500)
        R_N = sample_covariance(synthesize_snapshots(truth, rng))
        state, trace = amv_estimate(d, R_N, control)
        oracle = np.array([ml_minimizer(d, R_N, state, k) for k in range(K)])
        worst = max(worst, float(np.max(np.abs(oracle - state.powers)) / np.max(np.abs(state.powers))))
        if not trace.converged or np.any(state.powers <= 0):
            worst = np.inf
    return CheckResult("converged AMV is a fixed point of the ML minimizer", worst, tol, instances, time.perf_counter() - t0)


def _wls_argmin(fun, scale: float) -> float:
    """Brute-force minimizer of a 1-D quadratic cost over ``p >= 0``.

    A coarse logarithmic scan locates the basin; a least-squares parabola
    through 401 cost samples spanning it then gives the vertex. Near the
    minimum the cost is flat to roundoff, so a pure zoom-in search stalls
    around 1e-7 relative; the wide fit does not.
    """
    xs = np.concatenate([[0.0], scale * np.logspace(-8, 4, 1201)])
    vals = fun(xs)
    i = int(np.argmin(vals))
    lo, hi = xs[max(i - 20, 0)], xs[min(i + 20, xs.size - 1)]
    fine = np.linspace(lo, hi, 401)
    c2, c1, _ = np.polyfit(fine - fine.mean(), fun(fine), 2)
    return float(fine.mean() - c1 / (2.0 * c2))


def wls_equivalence(seed: int = 0, instances: int = 30, tol: float = 1e-6) -> CheckResult:
    """SAMV-1 power and noise updates equal the brute-force WLS minimizers (M <= 3).

    The weighting ``C - p^2 abar abar^H`` must be positive definite for the
    WLS cost to have a minimizer; instances where it is not are redrawn.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    done = 0
    t0 = time.perf_counter()
    while done < instances:
        M = int(rng.integers(2, 4))
        K = int(rng.integers(1, 5))
        d, state, R_N = random_instance(rng, M, K)
        # strong sources keep the noise-column weighting definite
        state = PowerState(state.powers * 5.0, state.noise * 0.1)
        model = assemble_R(d, state)
        _, tr_r2, _ = noise_forms(model.inverse, R_N)
        if float(state.noise) ** 2 * tr_r2 >= 0.9:
            continue
        update = samv_step(SamvVariant.SAMV1, d, R_N, state)
        scale = np.trace(R_N).real
        for k in range(K + 1):
            target = update.powers[k] if k < K else float(update.noise)
            found = _wls_argmin(lambda p, k=k: wls_cost(d, R_N, state, k, p), scale)
            worst = max(worst, abs(found - target) / max(abs(target), 1e-12))
        done += 1
    return CheckResult("SAMV-1 updates equal the WLS minimizers (signal and noise columns)", worst, tol, instances, time.perf_counter() - t0)


def run_all(seed: int = 0) -> list[CheckResult]:
    results = kronecker_identities(seed)
    results.append(ml_equivalence(seed))
    results.append(ml_fixed_point(seed))
    results.append(wls_equivalence(seed))
    return results
