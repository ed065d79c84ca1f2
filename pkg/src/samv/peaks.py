"""Peak picking on a gridded power spectrum."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PeakPick:
    indices: np.ndarray
    angles: np.ndarray
    padded: bool = False
    boundary: bool = False


def local_maxima(power: np.ndarray) -> np.ndarray:
    """Indices of local maxima, leftmost point of a plateau, boundaries one-sided."""
    power = np.asarray(power, dtype=float)
    n = power.size
    if n == 0:
        return np.zeros(0, dtype=int)
    # run-length encode so a flat top counts once, at its leftmost index
    starts = np.flatnonzero(np.r_[True, power[1:] != power[:-1]])
    vals = power[starts]
    left_ok = np.r_[True, vals[1:] > vals[:-1]]
    right_ok = np.r_[vals[:-1] > vals[1:], True]
    return starts[left_ok & right_ok]


def pick_peaks(power: np.ndarray, grid: np.ndarray, count: int) -> PeakPick:
    """Top ``count`` local maxima by power (ties broken by lower index).

    If the spectrum has fewer local maxima, the remainder is filled with the
    largest other grid values and the result is flagged as padded.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    power = np.asarray(power, dtype=float)
    grid = np.asarray(grid, dtype=float)
    peaks = local_maxima(power)
    # stable sort on -power keeps the leftmost index first among equal powers
    order = peaks[np.argsort(-power[peaks], kind="stable")]
    chosen = list(order[:count])
    padded = len(chosen) < count
    if padded:
        rest = np.argsort(-power, kind="stable")
        taken = set(chosen)
        for i in rest:
            if len(chosen) == count:
                break
            if i not in taken:
                chosen.append(int(i))
                taken.add(int(i))
    idx = np.asarray(chosen, dtype=int)
    boundary = bool(np.any((idx == 0) | (idx == power.size - 1)))
    return PeakPick(idx, grid[idx], padded=padded, boundary=boundary)
