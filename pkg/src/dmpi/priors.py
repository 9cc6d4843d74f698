"""Researcher priors stated as (family, mean, sd), and the reference sample drawn from them."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import ndtr

from .errors import InfeasiblePrior, TruncationTooTight
from .histograms import GridStack, SupportGrid, relative_frequencies

FAMILIES = ("Beta", "Gamma", "Normal", "TruncatedNormal", "Uniform")

# Rejection sampling gives up when fewer than one in this many parent draws lands in bounds.
MAX_REJECTION_TRIES = 10**6


@dataclass(frozen=True)
class PriorSpec:
    """One parameter's prior.

    For ``TruncatedNormal`` the mean and sd are those of the untruncated parent
    normal; bounds default to ``(0, inf)``. ``Uniform`` takes its range from
    ``bounds``, and mean/sd are derived from it when omitted.
    """

    family: str
    mean: Optional[float] = None
    sd: Optional[float] = None
    bounds: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InfeasiblePrior(f"unknown prior family {self.family!r}; expected one of {FAMILIES}")
        if self.bounds is not None:
            lo, hi = (float(b) for b in self.bounds)
            if not hi > lo:
                raise InfeasiblePrior(f"bounds must satisfy lower < upper, got {self.bounds}")
            object.__setattr__(self, "bounds", (lo, hi))
        if self.family == "Uniform":
            if self.bounds is None or not all(np.isfinite(self.bounds)):
                raise InfeasiblePrior("Uniform prior needs finite bounds")
            lo, hi = self.bounds
            if self.mean is None:
                object.__setattr__(self, "mean", 0.5 * (lo + hi))
            if self.sd is None:
                object.__setattr__(self, "sd", (hi - lo) / math.sqrt(12.0))
        if self.mean is None or self.sd is None:
            raise InfeasiblePrior(f"{self.family} prior needs both mean and sd")
        if not self.sd > 0:
            raise InfeasiblePrior(f"prior sd must be positive, got {self.sd}")
        parameterize(self)

    @classmethod
    def uniform(cls, lower, upper):
        return cls("Uniform", bounds=(lower, upper))

    @property
    def truncation(self) -> Tuple[float, float]:
        if self.family == "TruncatedNormal":
            return self.bounds if self.bounds is not None else (0.0, math.inf)
        if self.family == "Uniform":
            return self.bounds
        if self.family == "Beta":
            return (0.0, 1.0)
        if self.family == "Gamma":
            return (0.0, math.inf)
        return (-math.inf, math.inf)


def parameterize(spec: PriorSpec) -> dict:
    """Moment-matched native parameters of the prior family."""
    m, s = spec.mean, spec.sd
    if spec.family == "Beta":
        if not 0 < m < 1 or not s * s < m * (1 - m):
            raise InfeasiblePrior(f"Beta needs 0 < mean < 1 and sd^2 < mean(1-mean); got mean={m}, sd={s}")
        v = m * (1 - m) / (s * s) - 1.0
        return {"a": m * v, "b": (1 - m) * v}
    if spec.family == "Gamma":
        if not m > 0:
            raise InfeasiblePrior(f"Gamma needs a positive mean, got {m}")
        return {"shape": m * m / (s * s), "scale": s * s / m}
    if spec.family == "Normal":
        return {"loc": m, "scale": s}
    if spec.family == "TruncatedNormal":
        lo, hi = spec.truncation
        mass = ndtr((hi - m) / s) - ndtr((lo - m) / s)
        if mass < 1.0 / MAX_REJECTION_TRIES:
            raise TruncationTooTight(f"only {mass:.3g} of the parent normal lies in [{lo}, {hi}]")
        return {"loc": m, "scale": s, "lower": lo, "upper": hi}
    lo, hi = spec.bounds
    return {"lower": lo, "upper": hi}


def sample_prior(spec: PriorSpec, rng: np.random.Generator, size=None):
    p = parameterize(spec)
    if spec.family == "Beta":
        return rng.beta(p["a"], p["b"], size)
    if spec.family == "Gamma":
        return rng.gamma(p["shape"], p["scale"], size)
    if spec.family == "Normal":
        return rng.normal(p["loc"], p["scale"], size)
    if spec.family == "Uniform":
        return rng.uniform(p["lower"], p["upper"], size)
    return _truncated_normal(p, rng, size)


def _truncated_normal(p, rng, size):
    n = 1 if size is None else int(np.prod(size))
    out = np.empty(n)
    filled, tries = 0, 0
    while filled < n:
        batch = max(2 * (n - filled), 16)
        x = rng.normal(p["loc"], p["scale"], batch)
        x = x[(x > p["lower"]) & (x < p["upper"])][: n - filled]
        out[filled:filled + x.size] = x
        filled += x.size
        tries += batch
        if tries > MAX_REJECTION_TRIES * max(n, 1) and filled < n:
            raise TruncationTooTight("rejection sampler stalled")
    return out[0] if size is None else out.reshape(size)


def in_support(spec: PriorSpec, x):
    """True where ``x`` has positive prior density."""
    x = np.asarray(x, dtype=float)
    lo, hi = spec.truncation
    if spec.family in ("Uniform",):
        return (x >= lo) & (x <= hi)
    if spec.family == "Normal":
        return np.isfinite(x)
    return (x > lo) & (x < hi)


def prior_sd(spec: PriorSpec) -> float:
    return float(spec.sd)


def default_grid(spec: PriorSpec, K: int) -> SupportGrid:
    """Parameter-space support: the natural prior range, else mean +/- 10 sd."""
    if spec.family in ("Beta", "Uniform"):
        lo, hi = spec.truncation
        return SupportGrid(lo, hi, K)
    top = spec.mean + 10.0 * spec.sd
    if spec.family == "Normal":
        return SupportGrid(spec.mean - 10.0 * spec.sd, top, K)
    lo, hi = spec.truncation
    return SupportGrid(lo, min(hi, top) if np.isfinite(hi) else top, K)


@dataclass
class ReferenceSample:
    """``H`` joint prior draws with each column's histogram on its own grid."""

    draws: np.ndarray
    grids: Sequence[SupportGrid]
    histograms: np.ndarray = field(init=False)

    def __post_init__(self):
        self.stack = GridStack(self.grids)
        self.counts = self.stack.counts(self.draws)
        self.histograms = relative_frequencies(self.counts)

    @property
    def H(self) -> int:
        return self.draws.shape[0]


def build_reference_sample(specs: Sequence[PriorSpec], H: int, grids: Sequence[SupportGrid], seed) -> ReferenceSample:
    """Independent draws from each prior; ``seed`` may be an int or a Generator."""
    if len(grids) != len(specs):
        raise ValueError(f"{len(specs)} priors but {len(grids)} grids")
    rng = np.random.default_rng(seed)
    draws = np.column_stack([sample_prior(s, rng, H) for s in specs])
    return ReferenceSample(draws, list(grids))
