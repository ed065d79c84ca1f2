"""Array geometry, steering vectors, scanning dictionaries and snapshot synthesis.

Angles are in degrees measured from the array axis, so the region of
interest is the half-open interval [0, 180). Sensor positions are in units of
half a wavelength, which makes the phase of sensor ``m`` equal to
``pi * position_m * cos(theta)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


@dataclass(frozen=True)
class ArrayGeometry:
    """Linear array with scalar sensor positions (half-wavelength units)."""

    positions: tuple[float, ...]

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 1 or pos.size < 2:
            raise DomainError("an array needs at least 2 sensors")
        if not np.all(np.isfinite(pos)):
            raise DomainError("sensor positions must be finite")
        if np.any(np.diff(pos) <= 0):
            raise DomainError("sensor positions must be strictly increasing")
        object.__setattr__(self, "positions", tuple(float(x) for x in pos))

    @classmethod
    def ula(cls, num_sensors: int) -> "ArrayGeometry":
        """Uniform linear array with half-wavelength spacing."""
        return cls(tuple(range(int(num_sensors))))

    @property
    def num_sensors(self) -> int:
        return len(self.positions)

    @property
    def position_array(self) -> np.ndarray:
        return np.asarray(self.positions, dtype=float)


def _check_angles(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if np.any(~np.isfinite(theta)) or np.any(theta < 0.0) or np.any(theta >= 180.0):
        raise DomainError(f"angles must lie in [0, 180) degrees, got {theta}")
    return theta


def steering_vector(geometry: ArrayGeometry, theta: float) -> np.ndarray:
    """Array response ``exp(i*pi*position*cos(theta))`` for one angle in degrees."""
    theta = _check_angles(theta)
    if theta.ndim != 0:
        raise DomainError("steering_vector takes a single angle; use steering_matrix")
    return np.exp(1j * np.pi * geometry.position_array * np.cos(np.deg2rad(theta)))


def steering_matrix(geometry: ArrayGeometry, thetas: Sequence[float]) -> np.ndarray:
    """Stack steering vectors column-wise, shape (M, len(thetas))."""
    thetas = np.atleast_1d(_check_angles(thetas))
    phase = np.outer(geometry.position_array, np.cos(np.deg2rad(thetas)))
    return np.exp(1j * np.pi * phase)


def steering_derivative(geometry: ArrayGeometry, thetas: Sequence[float]) -> np.ndarray:
    """Derivative of the steering vectors with respect to theta in radians."""
    thetas = np.atleast_1d(_check_angles(thetas))
    rad = np.deg2rad(thetas)
    factor = -1j * np.pi * np.outer(geometry.position_array, np.sin(rad))
    return factor * steering_matrix(geometry, thetas)


class Dictionary:
    """Columns ``A`` (M x K) over which powers are estimated.

    The two hot operations of every estimator, ``A diag(p) A^H`` and the
    per-column forms ``a^H G a``, go through methods so that structured
    dictionaries can evaluate them faster.
    """

    def __init__(self, A: np.ndarray):
        self.A = np.asarray(A, dtype=complex)
        self._AH = np.ascontiguousarray(self.A.conj().T)
        self._norms2 = np.sum(np.abs(self.A) ** 2, axis=0)

    @property
    def num_sensors(self) -> int:
        return self.A.shape[0]

    @property
    def size(self) -> int:
        return self.A.shape[1]

    @property
    def column_norms2(self) -> np.ndarray:
        return self._norms2

    def covariance(self, powers: np.ndarray) -> np.ndarray:
        """``A diag(p) A^H`` (Hermitian)."""
        R = (self.A * powers) @ self._AH
        return 0.5 * (R + R.conj().T)

    def column_forms(self, G: np.ndarray) -> np.ndarray:
        """Real parts of ``a_k^H G a_k`` for Hermitian ``G``, one per column."""
        return np.einsum("ij,ij->j", self.A.conj(), G @ self.A).real


class SteeringDictionary(Dictionary):
    """Steering vectors of a linear array over a scanning grid in degrees.

    For a linear array ``conj(a_m) a_n`` depends only on the position
    difference ``x_n - x_m``, so both hot operations reduce to sums over the
    distinct lags (2M - 1 of them for a ULA) instead of all M^2 entries.
    """

    def __init__(self, geometry: ArrayGeometry, grid: np.ndarray, A: np.ndarray | None = None):
        grid = np.asarray(grid, dtype=float)
        if grid.ndim != 1 or np.any(np.diff(grid) <= 0):
            raise DomainError("scanning grid must be strictly increasing")
        super().__init__(steering_matrix(geometry, grid) if A is None else A)
        self.geometry = geometry
        self.grid = grid
        self._lags = None
        M = geometry.num_sensors
        diffs = np.round(geometry.position_array[:, None] - geometry.position_array[None, :], 9)
        lags, index = np.unique(diffs, return_inverse=True)
        if lags.size <= M * M // 2:
            # lag_index[m, n] points at x_m - x_n
            self._lag_index = index.reshape(M, M)
            phase = np.exp(1j * np.pi * np.outer(lags, np.cos(np.deg2rad(grid))))
            self._lag_re = np.ascontiguousarray(phase.real)
            self._lag_im = np.ascontiguousarray(phase.imag)
            self._lag_stack = np.vstack([self._lag_re, -self._lag_im])
            self._lag_flat = self._lag_index.T.ravel()
            self._lags = lags

    def __repr__(self):
        return f"SteeringDictionary(M={self.num_sensors}, K={self.size}, grid=[{self.grid[0]:g}..{self.grid[-1]:g}])"

    @property
    def step(self) -> float:
        if self.grid.size < 2:
            return 0.0
        return float(self.grid[1] - self.grid[0])

    def covariance(self, powers: np.ndarray) -> np.ndarray:
        if self._lags is None:
            return super().covariance(powers)
        r = self._lag_re @ powers + 1j * (self._lag_im @ powers)
        return r[self._lag_index]

    def column_forms(self, G: np.ndarray) -> np.ndarray:
        if self._lags is None:
            return super().column_forms(G)
        # conj(a_m) G_mn a_n carries the phase of lag x_n - x_m = lag_index[n, m]
        L = self._lags.size
        g_re = np.bincount(self._lag_flat, weights=G.real.ravel(), minlength=L)
        g_im = np.bincount(self._lag_flat, weights=G.imag.ravel(), minlength=L)
        return np.concatenate([g_re, g_im]) @ self._lag_stack


def build_dictionary(geometry: ArrayGeometry, start: float, stop: float, step: float) -> SteeringDictionary:
    """Half-open scanning grid ``start, start+step, ...`` strictly below ``stop``.

    The grid values are computed as ``start + k*step`` so a 0.2 degree grid
    holds exactly 900 points over [0, 180).
    """
    if not (step > 0):
        raise DomainError("grid step must be positive")
    if not (start < stop <= 180.0) or start < 0.0:
        raise DomainError(f"need 0 <= start < stop <= 180, got ({start}, {stop})")
    # A small slack absorbs floating error in (stop - start) / step.
    count = int(np.ceil((stop - start) / step - 1e-9))
    grid = start + step * np.arange(count)
    grid = grid[grid < stop]
    if grid.size == 0:
        raise DomainError("empty scanning grid")
    return SteeringDictionary(geometry, grid)


@dataclass(frozen=True)
class Source:
    angle: float
    power: float


@dataclass(frozen=True)
class Scenario:
    """Ground truth for a synthetic array experiment.

    ``noise`` is either a scalar (uniform white noise variance) or a sequence
    of per-sensor variances. ``coherence_groups`` lists groups of source
    indices sharing one waveform; sources not listed are independent.
    """

    geometry: ArrayGeometry
    sources: tuple[Source, ...]
    noise: float | tuple[float, ...]
    snapshots: int
    seed: int = 0
    coherence_groups: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        if self.snapshots < 1:
            raise DomainError("snapshot count must be at least 1")
        for s in self.sources:
            if not s.power > 0:
                raise DomainError(f"source powers must be positive, got {s.power}")
            _check_angles(s.angle)
        seen: set[int] = set()
        for group in self.coherence_groups:
            for idx in group:
                if not 0 <= idx < len(self.sources) or idx in seen:
                    raise DomainError(f"invalid coherence group {group}")
                seen.add(idx)
        noise = np.atleast_1d(np.asarray(self.noise, dtype=float))
        if np.any(noise < 0):
            raise DomainError("noise variances must be non-negative")
        if noise.size not in (1, self.geometry.num_sensors):
            raise DomainError("nonuniform noise needs one variance per sensor")

    @property
    def angles(self) -> np.ndarray:
        return np.array([s.angle for s in self.sources], dtype=float)

    @property
    def powers(self) -> np.ndarray:
        return np.array([s.power for s in self.sources], dtype=float)

    @property
    def is_uniform_noise(self) -> bool:
        return np.ndim(self.noise) == 0

    def noise_diagonal(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.noise, dtype=float), (self.geometry.num_sensors,)).copy()

    def waveform_groups(self) -> list[list[int]]:
        """Partition of source indices into groups that share a waveform."""
        grouped = {i for g in self.coherence_groups for i in g}
        groups = [list(g) for g in self.coherence_groups]
        groups += [[i] for i in range(len(self.sources)) if i not in grouped]
        return sorted(groups, key=min)

    def source_covariance(self) -> np.ndarray:
        """Waveform covariance ``P``; coherent sources are fully correlated."""
        amp = np.sqrt(self.powers)
        P = np.zeros((len(self.sources), len(self.sources)))
        for group in self.waveform_groups():
            idx = np.asarray(group)
            P[np.ix_(idx, idx)] = np.outer(amp[idx], amp[idx])
        return P

    def true_covariance(self) -> np.ndarray:
        """Population covariance ``A P A^H + diag(noise)`` including coherence."""
        A = steering_matrix(self.geometry, self.angles) if self.sources else np.zeros((self.geometry.num_sensors, 0))
        return A @ self.source_covariance() @ A.conj().T + np.diag(self.noise_diagonal())


def _complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    """Circular complex Gaussian with unit variance."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def synthesize_snapshots(scenario: Scenario, rng: np.random.Generator | None = None) -> np.ndarray:
    """Draw ``Y = A X + E`` with shape (M, N).

    Waveforms are i.i.d. circular Gaussian per snapshot. Sources within one
    coherence group reuse a single unit-variance waveform scaled by
    ``sqrt(p_k)``. Without an explicit ``rng`` the scenario seed is used.
    """
    if rng is None:
        rng = np.random.default_rng(scenario.seed)
    M, N = scenario.geometry.num_sensors, scenario.snapshots
    Y = np.zeros((M, N), dtype=complex)
    if scenario.sources:
        A = steering_matrix(scenario.geometry, scenario.angles)
        X = np.zeros((len(scenario.sources), N), dtype=complex)
        amp = np.sqrt(scenario.powers)
        for group in scenario.waveform_groups():
            w = _complex_gaussian(rng, N)
            for k in group:
                X[k] = amp[k] * w
        Y += A @ X
    noise_std = np.sqrt(scenario.noise_diagonal())
    Y += noise_std[:, None] * _complex_gaussian(rng, (M, N))
    return Y


def sample_covariance(Y: np.ndarray) -> np.ndarray:
    """``Y Y^H / N``, symmetrized to remove roundoff asymmetry."""
    Y = np.asarray(Y)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[1] < 1:
        raise DomainError("need at least one snapshot")
    R = Y @ Y.conj().T / Y.shape[1]
    return 0.5 * (R + R.conj().T)
