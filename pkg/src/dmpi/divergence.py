"""Pólya marginal likelihood and its Jensen–Shannon approximation.

Everything is computed in log space. Functions broadcast over leading axes, so
an ``(I, K)`` stack of histograms gives ``I`` values at once; bins are always
the last axis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import BinOutOfRange, InvalidSmoothing, ShapeMismatch


@dataclass(frozen=True)
class JsWeights:
    """Weights of the likelihood divergence: ``lam = (M + delta*K)/N``."""

    lam: float
    N: int

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")

    @classmethod
    def from_draws(cls, N, M, delta, K):
        return cls((M + delta * K) / N, int(N))


@dataclass(frozen=True)
class PriorWeights:
    """Weights of the prior divergence: ``tau = M/H``."""

    tau: float
    H: int

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.H < 1:
            raise ValueError(f"H must be >= 1, got {self.H}")

    @classmethod
    def from_draws(cls, H, M):
        return cls(M / H, int(H))


def _same_shape(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-1:] != b.shape[-1:]:
        raise ShapeMismatch(f"bin counts differ: {a.shape} vs {b.shape}")
    return a, b


def polya_log_marginal(n, alpha):
    """Log of the Dirichlet-multinomial (Pólya) probability of counts ``n``."""
    n, alpha = _same_shape(n, alpha)
    if np.any(alpha <= 0):
        raise InvalidSmoothing("Dirichlet concentrations must be positive")
    N = n.sum(axis=-1)
    A = alpha.sum(axis=-1)
    per_bin = gammaln(n + alpha) - gammaln(n + 1.0) - gammaln(alpha)
    return gammaln(N + 1.0) + gammaln(A) - gammaln(N + A) + per_bin.sum(axis=-1)


def kl_divergence(p, q):
    p, q = _same_shape(p, q)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * (np.log(p) - np.log(q)), 0.0)
    return terms.sum(axis=-1)


def _log_ratio(x, r, log_scale, log_den):
    """``log1p(r)``, switching to ``log(x) + log_scale - log_den`` where ``r`` is near -1."""
    near = r < -0.5
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = np.log(x) + log_scale - log_den
        return np.where(near, direct, np.log1p(np.where(near, 0.0, r)))


def _scaled_js(p, q, w):
    """``(1 + w) * D_JS^w(p || q)``, the un-normalised two-sum form.

    The log ratios against the mixture are written as ``log1p`` of small
    quantities so the ``w -> inf`` and ``w -> 0`` limits stay accurate; when one
    mass is tiny next to the other the ratio is taken directly instead.
    """
    p, q = _same_shape(p, q)
    denom = p + w * q
    live = denom > 0
    safe = np.where(live, denom, 1.0)
    log_den = np.log(safe)
    log_1w = np.log1p(w)
    # zero masses give -inf logs; they are multiplied by zero and masked below
    with np.errstate(divide="ignore", invalid="ignore"):
        log_p_m = _log_ratio(p, w * (p - q) / safe, log_1w, log_den)
        log_q_m = _log_ratio(q, (q - p) / safe, log_1w, log_den)
        first = np.where(p > 0, p * log_p_m, 0.0).sum(axis=-1)
        second = np.where(q > 0, q * log_q_m, 0.0).sum(axis=-1)
    return first + w * second


def js_divergence_weighted(zeta, q, lam):
    """``lam``-weighted Jensen–Shannon divergence between two mass vectors."""
    lam = lam.lam if isinstance(lam, JsWeights) else lam
    return _scaled_js(zeta, q, lam) / (1.0 + lam)


def js_log_likelihood(zeta, q, w: JsWeights):
    """``ln N - (1 + lam) N D_JS^lam(zeta || q)``; equals ``ln N`` iff ``zeta == q``."""
    return np.log(w.N) - w.N * _scaled_js(zeta, q, w.lam)


def js_log_likelihood_kl_limit(zeta, q, N):
    """Hard-restriction limit ``ln N - N KL(zeta || q)``; ``-inf`` off-support."""
    return np.log(N) - N * kl_divergence(zeta, q)


def single_draw_log_predictive(theory_bin, n, delta, K=None):
    """Single theoretical draw limit: ``ln((n_k + delta + 1)/(N + delta*K + 1))``."""
    n = np.asarray(n, dtype=float)
    K = n.shape[-1] if K is None else K
    if n.shape[-1] != K:
        raise ShapeMismatch(f"histogram has {n.shape[-1]} bins, expected {K}")
    if not 0 <= theory_bin < K:
        raise BinOutOfRange(f"bin {theory_bin} outside 0..{K - 1}")
    N = n.sum(axis=-1)
    return np.log(n[..., theory_bin] + delta + 1.0) - np.log(N + delta * K + 1.0)


def predictive_mass(n, alpha, k=None):
    """Predictive probability of one more draw landing in each bin."""
    n, alpha = _same_shape(n, alpha)
    mass = (n + alpha) / (n.sum(axis=-1, keepdims=True) + alpha.sum(axis=-1, keepdims=True))
    return mass if k is None else mass[..., k]


def js_log_prior(xi, omega, w: PriorWeights):
    """``ln H - (1 + tau) H D_JS^tau(xi || omega)`` on unsmoothed histograms."""
    return np.log(w.H) - w.H * _scaled_js(xi, omega, w.tau)
