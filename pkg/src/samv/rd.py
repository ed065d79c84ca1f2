"""Single-snapshot range-Doppler imaging with a polyphase (P3) pulse.

Each image pixel is a dictionary column: the pulse delayed by ``d`` samples
and modulated by the fast-time Doppler phase ``exp(i 2 pi f n / F)``, zero
padded to the full convolution length ``L + D - 1``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .amv import IterationControl
from .array import Dictionary, DomainError
from .baselines import iaa_estimate, per_estimate
from .sparse import SamvVariant, samv_estimate

# bins farther than this (Chebyshev distance) from every target count as sidelobes
SIDELOBE_GUARD = 2


def p3_code(length: int) -> np.ndarray:
    """Unit-modulus P3 code with phases ``pi (n-1)^2 / L``, ``n = 1..L``."""
    if length < 2:
        raise DomainError("a P3 code needs length >= 2")
    n = np.arange(length)
    return np.exp(1j * np.pi * n**2 / length)


@dataclass
class RdGrid:
    waveform: np.ndarray
    num_delays: int
    num_dopplers: int
    dictionary: Dictionary

    @property
    def observation_length(self) -> int:
        return self.dictionary.num_sensors

    def column(self, delay: int, doppler: int) -> int:
        return delay * self.num_dopplers + doppler

    def reshape(self, values: np.ndarray) -> np.ndarray:
        """Column-ordered vector to a (delay, doppler) image."""
        return np.asarray(values).reshape(self.num_delays, self.num_dopplers)


def build_rd_dictionary(waveform: np.ndarray, num_delays: int, num_dopplers: int) -> RdGrid:
    """Delay-shifted, Doppler-modulated copies of ``waveform``, delay-major order."""
    if num_delays < 1 or num_dopplers < 1:
        raise DomainError("need at least one delay and one Doppler bin")
    s = np.asarray(waveform, dtype=complex)
    L = s.size
    n_obs = L + num_delays - 1
    n = np.arange(n_obs)
    A = np.zeros((n_obs, num_delays * num_dopplers), dtype=complex)
    for d in range(num_delays):
        shifted = np.zeros(n_obs, dtype=complex)
        shifted[d : d + L] = s
        for f in range(num_dopplers):
            A[:, d * num_dopplers + f] = shifted * np.exp(2j * np.pi * f * n / num_dopplers)
    return RdGrid(s, num_delays, num_dopplers, Dictionary(A))


class RdMethod(enum.Enum):
    MF = "mf"
    IAA = "iaa"
    SAMV0 = "samv0"
    SAMV1 = "samv1"
    SAMV2 = "samv2"

    @classmethod
    def parse(cls, value) -> "RdMethod":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise DomainError(f"unknown imaging method {value!r}; valid: {[m.value for m in cls]}") from None


@dataclass(frozen=True)
class Target:
    delay: int
    doppler: int
    power_db: float


@dataclass
class RdImage:
    method: str
    power: np.ndarray
    targets: list[Target] = field(default_factory=list)

    @property
    def power_db(self) -> np.ndarray:
        return 10.0 * np.log10(np.maximum(self.power, np.finfo(float).tiny))


def rd_image(
    method,
    grid: RdGrid,
    observation: np.ndarray,
    control: IterationControl = IterationControl(record_states=False),
    targets=(),
) -> RdImage:
    """Image one observation vector with a matched filter, IAA or a SAMV variant."""
    method = RdMethod.parse(method)
    y = np.asarray(observation, dtype=complex).ravel()
    if y.size != grid.observation_length:
        raise DomainError(f"observation has {y.size} samples, dictionary expects {grid.observation_length}")
    R_N = np.outer(y, y.conj())
    if method is RdMethod.MF:
        p = per_estimate(grid.dictionary, R_N)
    elif method is RdMethod.IAA:
        p = iaa_estimate(grid.dictionary, y[:, None])
    else:
        state, _ = samv_estimate(SamvVariant(method.value), grid.dictionary, R_N, control)
        p = state.powers
    return RdImage(method.value, grid.reshape(np.maximum(p, 0.0)), list(targets))


# -- scenes and scoring -------------------------------------------------------


@dataclass(frozen=True)
class RdScene:
    code_length: int
    num_delays: int
    num_dopplers: int
    targets: tuple[Target, ...]
    noise_db: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for t in self.targets:
            if not (0 <= t.delay < self.num_delays and 0 <= t.doppler < self.num_dopplers):
                raise DomainError(f"target {t} lies outside the {self.num_delays}x{self.num_dopplers} grid")

    def grid(self) -> RdGrid:
        return build_rd_dictionary(p3_code(self.code_length), self.num_delays, self.num_dopplers)

    def observe(self, grid: RdGrid | None = None) -> np.ndarray:
        """Targets with exact powers and random phases plus circular white noise."""
        grid = grid or self.grid()
        rng = np.random.default_rng(self.seed)
        y = np.zeros(grid.observation_length, dtype=complex)
        for t in self.targets:
            amp = np.sqrt(10.0 ** (t.power_db / 10.0)) * np.exp(2j * np.pi * rng.random())
            y += amp * grid.dictionary.A[:, grid.column(t.delay, t.doppler)]
        sigma = 10.0 ** (self.noise_db / 10.0)
        y += np.sqrt(sigma / 2.0) * (rng.standard_normal(y.size) + 1j * rng.standard_normal(y.size))
        return y


def image_peaks(power: np.ndarray, floor_db: float) -> np.ndarray:
    """Boolean mask of 3x3 local maxima within ``floor_db`` of the image maximum."""
    power = np.asarray(power, dtype=float)
    padded = np.pad(power, 1, constant_values=-np.inf)
    rows, cols = power.shape
    neighbours = np.stack(
        [padded[1 + dr : 1 + dr + rows, 1 + dc : 1 + dc + cols] for dr in (-1, 0, 1) for dc in (-1, 0, 1) if dr or dc]
    )
    is_max = np.all(power >= neighbours, axis=0)
    return is_max & (power >= power.max() * 10.0 ** (-floor_db / 10.0)) & (power > 0)


def detected_targets(image: RdImage, targets, floor_db: float, tolerance: int = 1) -> list[bool]:
    """Per target: is there an image peak within ``tolerance`` bins of it?"""
    peaks = image_peaks(image.power, floor_db)
    found = []
    for t in targets:
        lo_d, lo_f = max(t.delay - tolerance, 0), max(t.doppler - tolerance, 0)
        found.append(bool(peaks[lo_d : t.delay + tolerance + 1, lo_f : t.doppler + tolerance + 1].any()))
    return found


def sidelobe_level_db(image: RdImage, targets, guard: int = SIDELOBE_GUARD) -> float:
    """Largest power more than ``guard`` bins from every target, in dB relative to the image maximum."""
    mask = np.ones(image.power.shape, dtype=bool)
    for t in targets:
        mask[max(t.delay - guard, 0) : t.delay + guard + 1, max(t.doppler - guard, 0) : t.doppler + guard + 1] = False
    if not mask.any():
        raise DomainError("no bins outside the target guard regions")
    peak = image.power.max()
    side = image.power[mask].max()
    tiny = np.finfo(float).tiny
    return float(10.0 * np.log10(max(side, tiny) / max(peak, tiny)))


# Canonical 9-target layout on the 20 x 20 grid: bins at least 3 apart and
# every pairwise matched-filter leakage below -19 dB. The first entry of each
# group of three is the weak target.
CANONICAL_LAYOUT = ((0, 18), (1, 9), (3, 3), (3, 17), (9, 5), (11, 11), (12, 0), (13, 14), (18, 19))


def canonical_scene(weak_db: float, strong_db: float = 25.0, seed: int = 0) -> RdScene:
    """Six strong and three weak targets at :data:`CANONICAL_LAYOUT`, 0 dB noise."""
    targets = tuple(
        Target(d, f, float(weak_db) if i % 3 == 0 else float(strong_db)) for i, (d, f) in enumerate(CANONICAL_LAYOUT)
    )
    return RdScene(30, 20, 20, targets, noise_db=0.0, seed=seed)
