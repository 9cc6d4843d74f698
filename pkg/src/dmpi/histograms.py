"""Equal-width binning of draws onto fixed finite supports.

Bins are half-open ``[lower + k*w, lower + (k+1)*w)`` with the last bin closed
on the right. Draws outside the support are clamped into the edge bins so that
histogram totals always equal the number of draws; the number of clamped draws
is available separately for diagnostics.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptySample, InvalidGrid, InvalidSmoothing, NonFiniteDraw


@dataclass(frozen=True)
class SupportGrid:
    lower: float
    upper: float
    K: int

    def __post_init__(self):
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            raise InvalidGrid(f"non-finite support [{self.lower}, {self.upper}]")
        if not self.upper > self.lower:
            raise InvalidGrid(f"upper ({self.upper}) must exceed lower ({self.lower})")
        if int(self.K) != self.K or self.K < 2:
            raise InvalidGrid(f"K must be an integer >= 2, got {self.K}")

    @property
    def width(self) -> float:
        return (self.upper - self.lower) / self.K

    @property
    def edges(self) -> np.ndarray:
        return self.lower + self.width * np.arange(self.K + 1)

    def midpoints(self) -> np.ndarray:
        return self.lower + self.width * (np.arange(self.K) + 0.5)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x >= self.lower) & (x <= self.upper)


def _check_finite(x):
    if not np.all(np.isfinite(x)):
        raise NonFiniteDraw("draws must be finite")


def bin_index(x, grid: SupportGrid):
    """Bin index of ``x`` (scalar or array), clamping out-of-support values."""
    arr = np.asarray(x, dtype=float)
    _check_finite(arr)
    idx = np.floor((arr - grid.lower) / grid.width)
    idx = np.clip(idx, 0, grid.K - 1).astype(np.int64)
    return int(idx) if idx.ndim == 0 else idx


def count_histogram(draws: Sequence[float], grid: SupportGrid) -> np.ndarray:
    draws = np.asarray(draws, dtype=float).ravel()
    if draws.size == 0:
        raise EmptySample("cannot histogram an empty sample")
    return np.bincount(bin_index(draws, grid), minlength=grid.K).astype(np.int64)


def clamped_count(draws, grid: SupportGrid) -> int:
    """Number of draws that fell outside the support and were clamped."""
    draws = np.asarray(draws, dtype=float)
    return int(np.count_nonzero(~grid.contains(draws)))


def relative_frequencies(counts) -> np.ndarray:
    counts = np.asarray(counts)
    total = counts.sum(axis=-1, keepdims=True)
    if np.any(total <= 0):
        raise EmptySample("relative frequencies of an empty histogram")
    return counts / total


def dirichlet_concentrations(theory_counts, delta: float):
    """Additively smoothed concentrations ``alpha = counts + delta``.

    Returns ``(alpha, scale)`` with ``scale = M + delta*K`` (the sum of alpha).
    """
    if not delta > 0:
        raise InvalidSmoothing(f"smoothing delta must be positive, got {delta}")
    alpha = np.asarray(theory_counts, dtype=float) + delta
    return alpha, alpha.sum(axis=-1)


class GridStack:
    """A fixed set of grids sharing one bin count, binned in a single pass.

    Used on the sampler's hot path: ``counts(draws)`` takes an ``(n, I)`` array
    and returns an ``(I, K)`` integer array, column ``i`` binned on grid ``i``.
    """

    def __init__(self, grids: Sequence[SupportGrid]):
        grids = list(grids)
        if not grids:
            raise InvalidGrid("GridStack needs at least one grid")
        Ks = {g.K for g in grids}
        if len(Ks) != 1:
            raise InvalidGrid(f"all grids in a stack must share K, got {sorted(Ks)}")
        self.grids = grids
        self.K = grids[0].K
        self.lower = np.array([g.lower for g in grids])
        self.upper = np.array([g.upper for g in grids])
        self.width = np.array([g.width for g in grids])
        self._offset = self.K * np.arange(len(grids))

    def __len__(self):
        return len(self.grids)

    def indices(self, draws) -> np.ndarray:
        draws = np.asarray(draws, dtype=float)
        idx = np.floor((draws - self.lower) / self.width)
        return np.clip(idx, 0, self.K - 1).astype(np.int64)

    def counts(self, draws) -> np.ndarray:
        idx = self.indices(draws) + self._offset
        flat = np.bincount(idx.ravel(), minlength=self.K * len(self.grids))
        return flat.reshape(len(self.grids), self.K)

    def clamped(self, draws) -> np.ndarray:
        draws = np.asarray(draws, dtype=float)
        return np.count_nonzero((draws < self.lower) | (draws > self.upper), axis=0)


def histogram_rows(counts, grids: Sequence[SupportGrid], ids=None):
    """Rows of (moment_id, bin_index, bin_lower, bin_upper, count, frequency)."""
    counts = np.asarray(counts)
    ids = list(ids) if ids is not None else list(range(len(grids)))
    rows = []
    for name, c, g in zip(ids, counts, grids):
        freq = c / c.sum() if c.sum() > 0 else np.zeros(len(c))
        edges = g.edges
        for k in range(g.K):
            rows.append((name, k, edges[k], edges[k + 1], int(c[k]), float(freq[k])))
    return rows


@dataclass
class MomentPanel:
    """Draws of ``I`` moments binned on per-moment grids."""

    draws: np.ndarray
    stack: GridStack
    counts: np.ndarray
    clamped: np.ndarray

    @classmethod
    def from_draws(cls, draws, stack: GridStack) -> "MomentPanel":
        draws = np.atleast_2d(np.asarray(draws, dtype=float))
        if draws.shape[0] == 0:
            raise EmptySample("moment panel needs at least one draw")
        _check_finite(draws)
        return cls(draws, stack, stack.counts(draws), stack.clamped(draws))

    @property
    def size(self) -> int:
        return self.draws.shape[0]

    @property
    def frequencies(self) -> np.ndarray:
        return relative_frequencies(self.counts)
