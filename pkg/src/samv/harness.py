"""Monte Carlo sweeps over SNR with total angle MSE and the stochastic CRB."""

from __future__ import annotations

import dataclasses
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .amv import IterationControl, amv_estimate
from .array import DomainError, Scenario, SteeringDictionary, build_dictionary, sample_covariance, steering_derivative, steering_matrix, synthesize_snapshots
from .baselines import iaa_estimate, music_pseudospectrum, per_estimate
from .peaks import PeakPick, pick_peaks
from .sml import samv_sml_estimate
from .sparse import SamvVariant, samv_estimate

log = logging.getLogger(__name__)


def snr_to_sigma(powers: Sequence[float], snr_db: float) -> float:
    """Noise variance giving ``snr_db`` relative to the average source power."""
    powers = np.asarray(powers, dtype=float)
    if powers.size == 0 or np.any(powers <= 0):
        raise DomainError("source powers must be positive")
    return float(powers.mean() / 10.0 ** (snr_db / 10.0))


def match_indices(estimate: Sequence[float], truth: Sequence[float]) -> np.ndarray:
    """Index of the estimate assigned to each true angle, truth sorted ascending.

    Each true angle, smallest first, takes the nearest estimate not yet used
    (lower index on ties).
    """
    estimate = np.asarray(estimate, dtype=float)
    truth = np.sort(np.asarray(truth, dtype=float))
    if estimate.size != truth.size:
        raise DomainError(f"{estimate.size} estimates for {truth.size} sources")
    free = list(range(estimate.size))
    chosen = np.empty(truth.size, dtype=int)
    for i, t in enumerate(truth):
        j = min(free, key=lambda f: (abs(estimate[f] - t), f))
        chosen[i] = j
        free.remove(j)
    return chosen


def match_estimates(estimate: Sequence[float], truth: Sequence[float]) -> np.ndarray:
    """``estimate`` reordered to line up with ``sorted(truth)``."""
    return np.asarray(estimate, dtype=float)[match_indices(estimate, truth)]


def total_angle_mse(estimates: Sequence[Sequence[float]], truth: Sequence[float]) -> float:
    """Sum over sources of the mean squared angle error across trials (deg^2)."""
    truth_sorted = np.sort(np.asarray(truth, dtype=float))
    if len(estimates) == 0:
        raise DomainError("no trials")
    errs = np.array([match_estimates(e, truth) - truth_sorted for e in estimates])
    return float(np.sum(np.mean(errs**2, axis=0)))


def stochastic_crb(scenario: Scenario) -> np.ndarray:
    """Stochastic CRB on the source angles, in degrees squared."""
    M = scenario.geometry.num_sensors
    K = len(scenario.sources)
    if not 0 < K < M:
        raise DomainError(f"the CRB needs 0 < K < M, got K={K}, M={M}")
    if not scenario.is_uniform_noise or not scenario.noise > 0:
        raise DomainError("the CRB needs a positive uniform noise variance")
    sigma = float(scenario.noise)
    A = steering_matrix(scenario.geometry, scenario.angles)
    D = steering_derivative(scenario.geometry, scenario.angles)
    P = scenario.source_covariance()
    R = scenario.true_covariance()
    proj = np.eye(M) - A @ np.linalg.solve(A.conj().T @ A, A.conj().T)
    H = (D.conj().T @ proj @ D) * (P @ A.conj().T @ np.linalg.solve(R, A) @ P).T
    F = H.real
    if np.linalg.cond(F) > 1e12:
        raise np.linalg.LinAlgError("singular Fisher information for the source angles")
    crb = sigma / (2.0 * scenario.snapshots) * np.linalg.inv(F)
    return crb * (180.0 / np.pi) ** 2


# -- estimator registry -------------------------------------------------------


@dataclass
class TrialEstimate:
    angles: np.ndarray
    powers: np.ndarray
    padded: bool = False


class _TrialContext:
    """Data shared by every estimator on one trial; caches the SAMV-2 result."""

    def __init__(self, dictionary, Y, num_sources, control):
        self.dictionary = dictionary
        self.Y = Y
        self.R_N = sample_covariance(Y)
        self.num_sources = num_sources
        self.control = control
        self._samv2 = None

    def samv2(self):
        if self._samv2 is None:
            self._samv2, _ = samv_estimate(SamvVariant.SAMV2, self.dictionary, self.R_N, self.control)
        return self._samv2

    def from_spectrum(self, power, has_powers=True) -> TrialEstimate:
        pick: PeakPick = pick_peaks(power, self.dictionary.grid, self.num_sources)
        p = power[pick.indices] if has_powers else np.full(pick.indices.size, np.nan)
        return TrialEstimate(pick.angles, p, pick.padded)


def _grid_estimator(fn, has_powers=True):
    def run(ctx: _TrialContext) -> TrialEstimate:
        return ctx.from_spectrum(fn(ctx), has_powers)

    return run


def _sml_estimator(method):
    def run(ctx: _TrialContext) -> TrialEstimate:
        res = samv_sml_estimate(ctx.dictionary, ctx.R_N, ctx.num_sources, method, ctx.control, init=ctx.samv2(), allow_padding=True)
        return TrialEstimate(res.angles, res.powers, res.padded)

    return run


ESTIMATORS: dict[str, Callable[[_TrialContext], TrialEstimate]] = {
    "per": _grid_estimator(lambda c: per_estimate(c.dictionary, c.R_N)),
    "iaa": _grid_estimator(lambda c: iaa_estimate(c.dictionary, c.Y)),
    "music": _grid_estimator(lambda c: music_pseudospectrum(c.dictionary, c.R_N, c.num_sources), has_powers=False),
    "amv": _grid_estimator(lambda c: amv_estimate(c.dictionary, c.R_N, c.control)[0].powers),
    "samv0": _grid_estimator(lambda c: samv_estimate(SamvVariant.SAMV0, c.dictionary, c.R_N, c.control)[0].powers),
    "samv1": _grid_estimator(lambda c: samv_estimate(SamvVariant.SAMV1, c.dictionary, c.R_N, c.control)[0].powers),
    "samv2": _grid_estimator(lambda c: c.samv2().powers),
    "amv-sml": _sml_estimator("amv"),
    "samv1-sml": _sml_estimator("samv1"),
    "samv2-sml": _sml_estimator("samv2"),
}


def check_estimators(names: Sequence[str]) -> list[str]:
    names = [n.lower() for n in names]
    unknown = [n for n in names if n not in ESTIMATORS]
    if unknown:
        raise DomainError(f"unknown estimator(s) {unknown}; valid names: {', '.join(ESTIMATORS)}")
    if not names:
        raise DomainError("no estimators requested")
    return names


# -- sweeps -------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    start: float = 0.0
    stop: float = 180.0
    step: float = 0.2

    def build(self, scenario: Scenario) -> SteeringDictionary:
        return build_dictionary(scenario.geometry, self.start, self.stop, self.step)


@dataclass(frozen=True)
class SweepConfig:
    """Scenario template (its noise is overwritten per SNR) and the sweep plan."""

    scenario: Scenario
    snr_list: tuple[float, ...]
    trials: int
    estimators: tuple[str, ...]
    base_seed: int = 0
    grid: GridSpec = GridSpec()
    control: IterationControl = IterationControl(record_states=False)

    def __post_init__(self):
        if self.trials < 1:
            raise DomainError("trials must be at least 1")
        if not self.snr_list:
            raise DomainError("snr_list is empty")
        if not self.scenario.sources:
            raise DomainError("a sweep needs at least one source")
        object.__setattr__(self, "estimators", tuple(check_estimators(self.estimators)))
        object.__setattr__(self, "snr_list", tuple(float(s) for s in self.snr_list))

    def trial_scenario(self, snr_index: int) -> Scenario:
        sigma = snr_to_sigma(self.scenario.powers, self.snr_list[snr_index])
        return dataclasses.replace(self.scenario, noise=sigma)

    def trial_rng(self, snr_index: int, trial: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.base_seed, snr_index, trial]))


@dataclass
class TrialRecord:
    estimator: str
    snr_index: int
    trial: int
    angles: np.ndarray
    powers: np.ndarray
    padded: bool
    error: str = ""
    seconds: float = 0.0


@dataclass
class SweepRow:
    estimator: str
    snr_db: float
    total_mse_deg2: float
    crb_deg2: float
    mean_power_bias: float
    trials: int
    failures: int
    seconds: float


@dataclass
class SweepResult:
    rows: list[SweepRow]
    records: list[TrialRecord] = field(default_factory=list)
    crb: list[float] = field(default_factory=list)

    def row(self, estimator: str, snr_db: float) -> SweepRow:
        for r in self.rows:
            if r.estimator == estimator and r.snr_db == snr_db:
                return r
        raise KeyError((estimator, snr_db))

    def mse(self, estimator: str) -> np.ndarray:
        return np.array([r.total_mse_deg2 for r in self.rows if r.estimator == estimator])


def run_trial(config: SweepConfig, dictionary: SteeringDictionary, snr_index: int, trial: int) -> list[TrialRecord]:
    scenario = config.trial_scenario(snr_index)
    Y = synthesize_snapshots(scenario, config.trial_rng(snr_index, trial))
    ctx = _TrialContext(dictionary, Y, len(scenario.sources), config.control)
    out = []
    for name in config.estimators:
        t0 = time.perf_counter()
        try:
            est = ESTIMATORS[name](ctx)
            rec = TrialRecord(name, snr_index, trial, np.asarray(est.angles, float), np.asarray(est.powers, float), est.padded)
        except (np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
            log.debug("trial %d/%d %s failed: %s", snr_index, trial, name, exc)
            nan = np.full(len(scenario.sources), np.nan)
            rec = TrialRecord(name, snr_index, trial, nan, nan, False, error=f"{type(exc).__name__}: {exc}")
        rec.seconds = time.perf_counter() - t0
        out.append(rec)
    return out


def _run_chunk(args):
    config, snr_index, trials = args
    dictionary = config.grid.build(config.scenario)
    return [rec for t in trials for rec in run_trial(config, dictionary, snr_index, t)]


def _summarize(config: SweepConfig, records: list[TrialRecord]) -> SweepResult:
    truth = np.sort(config.scenario.angles)
    order = np.argsort(config.scenario.angles)
    true_powers = config.scenario.powers[order]
    rows, crbs = [], []
    for si, snr in enumerate(config.snr_list):
        try:
            crb = float(np.trace(stochastic_crb(config.trial_scenario(si))))
        except (np.linalg.LinAlgError, DomainError):
            crb = float("nan")
        crbs.append(crb)
        for name in config.estimators:
            recs = [r for r in records if r.estimator == name and r.snr_index == si]
            recs.sort(key=lambda r: r.trial)
            ok = [r for r in recs if not r.error]
            failures = sum(1 for r in recs if r.error or r.padded)
            if ok:
                mse = total_angle_mse([r.angles for r in ok], truth)
                bias = []
                for r in ok:
                    bias.append(r.powers[match_indices(r.angles, truth)] - true_powers)
                mean_bias = float(np.mean(bias))
            else:
                mse = mean_bias = float("nan")
            seconds = float(sum(r.seconds for r in recs))
            rows.append(SweepRow(name, snr, mse, crb, mean_bias, len(recs), failures, seconds))
    return SweepResult(rows, records, crbs)


def run_sweep(config: SweepConfig, threads: int = 1, progress: Callable[[str], None] | None = None) -> SweepResult:
    """Run every estimator on every (SNR, trial) pair.

    Trial data depend only on ``(base_seed, snr_index, trial)``, so the result
    is the same for any ``threads``. Failed trials are counted, not raised.
    """
    if threads < 1:
        raise DomainError("threads must be at least 1")
    records: list[TrialRecord] = []
    if threads == 1:
        dictionary = config.grid.build(config.scenario)
        for si, snr in enumerate(config.snr_list):
            for t in range(config.trials):
                records.extend(run_trial(config, dictionary, si, t))
            if progress:
                progress(f"SNR {snr:g} dB: {config.trials} trials done")
    else:
        jobs = []
        for si in range(len(config.snr_list)):
            for chunk in np.array_split(np.arange(config.trials), threads):
                if chunk.size:
                    jobs.append((config, si, chunk.tolist()))
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for (_, si, _), recs in zip(jobs, pool.map(_run_chunk, jobs)):
                records.extend(recs)
                if progress:
                    progress(f"SNR {config.snr_list[si]:g} dB: chunk of {len(recs) // len(config.estimators)} trials done")
    records.sort(key=lambda r: (r.snr_index, r.trial, config.estimators.index(r.estimator)))
    return _summarize(config, records)
