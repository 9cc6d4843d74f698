"""Marginal likelihood, likelihood/prior decomposition and Monte Carlo aggregation."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp
from scipy.stats import chi2

from .errors import EmptyReplications, InsufficientDraws

RIDGE = 1e-10


@dataclass
class PosteriorStore:
    """Stored posterior draws, each flattened to one point in ``R^(M*B)``.

    ``scale`` optionally gives the length unit of each parameter column. The
    kernel is integrated against Lebesgue measure in those units, so the
    marginal likelihood does not depend on how parameters are measured.
    """

    draws: np.ndarray
    loglik: np.ndarray
    logprior: np.ndarray
    M: int = 1
    B: int = 1
    scale: Optional[np.ndarray] = None
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.draws = np.asarray(self.draws, dtype=float)
        if self.draws.ndim == 3:
            self.M, self.B = self.draws.shape[1:]
            self.draws = self.draws.reshape(len(self.draws), -1)
        elif self.draws.ndim == 1:
            self.draws = self.draws[:, None]
        self.loglik = np.asarray(self.loglik, dtype=float)
        self.logprior = np.asarray(self.logprior, dtype=float)

    @classmethod
    def from_output(cls, out, scale=None, config=None):
        return cls(out.draws, out.loglik, out.logprior, scale=scale, config=dict(config or {}))

    @property
    def log_kernel(self):
        return self.loglik + self.logprior

    def __len__(self):
        return self.draws.shape[0]

    def parameter_draws(self):
        """``(S*M, B)`` array pooling the ``M`` rows of every stored draw."""
        return self.draws.reshape(-1, self.B)


@dataclass
class MhmResult:
    log_ml: float
    ridge: bool
    n_inside: int


def log_marginal_likelihood_mhm(store: PosteriorStore, truncation_prob=0.9, detail=False):
    """Modified harmonic mean with a truncated normal weighting density.

    ``f`` is the normal fitted to the draws, restricted to its
    ``truncation_prob`` highest-density ellipsoid and renormalised. The
    estimate is ``-log mean(f / kernel)``, evaluated with log-sum-exp.
    """
    if not 0 < truncation_prob < 1:
        raise ValueError("truncation_prob must lie in (0, 1)")
    x = store.draws
    n, d = x.shape
    if n < d + 2:
        raise InsufficientDraws(f"need at least {d + 2} draws for a {d}-dimensional fit, got {n}")
    if store.scale is not None:
        x = x / np.tile(np.asarray(store.scale, dtype=float), d // len(store.scale))
    logk = store.log_kernel
    mean = x.mean(axis=0)
    dev = x - mean
    cov = dev.T @ dev / (n - 1) if d > 1 else np.atleast_2d(dev.var(ddof=1))
    ridge = False
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        ridge = True
        L = np.linalg.cholesky(cov + RIDGE * np.eye(d))
    z = np.linalg.solve(L, dev.T)
    q = np.einsum("ij,ij->j", z, z)
    bound = chi2.ppf(truncation_prob, d)
    inside = q <= bound
    log_det = 2.0 * np.log(np.diag(L)).sum()
    log_f = -0.5 * (d * math.log(2 * math.pi) + log_det + q) - math.log(truncation_prob)
    terms = np.where(inside, log_f - logk, -np.inf)
    value = -(logsumexp(terms) - math.log(n))
    if detail:
        return MhmResult(float(value), ridge, int(inside.sum()))
    return float(value)


def twice_log_bayes_factor(logml_a, logml_b):
    return 2.0 * (logml_a - logml_b)


def decompose(store: PosteriorStore):
    """Posterior means of the log-likelihood and log-prior parts."""
    return float(np.mean(store.loglik)), float(np.mean(store.logprior))


@dataclass
class ReplicationResult:
    """What a single replication contributes to the Monte Carlo summary."""

    posterior_mean: np.ndarray
    log_ml: float
    log_lik: float
    log_prior: float
    param_names: Sequence[str] = ()


@dataclass
class McSummary:
    param_names: list
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    log_ml: tuple
    log_lik: tuple
    log_prior: tuple
    replications: int


def aggregate_replications(runs: Sequence[ReplicationResult], level=0.95) -> McSummary:
    """Means and percentile intervals of posterior means across replications."""
    if not runs:
        raise EmptyReplications("no replications to aggregate")
    pm = np.array([r.posterior_mean for r in runs], dtype=float)
    tail = 100 * (1 - level) / 2
    lo, hi = np.percentile(pm, [tail, 100 - tail], axis=0)

    def ms(values):
        v = np.array(values, dtype=float)
        return float(v.mean()), float(v.std(ddof=1)) if len(v) > 1 else 0.0

    names = list(runs[0].param_names) or [f"param_{b + 1}" for b in range(pm.shape[1])]
    return McSummary(
        param_names=names,
        mean=pm.mean(axis=0),
        lower=lo,
        upper=hi,
        log_ml=ms([r.log_ml for r in runs]),
        log_lik=ms([r.log_lik for r in runs]),
        log_prior=ms([r.log_prior for r in runs]),
        replications=len(runs),
    )


def summary_rows(summaries: dict):
    """CSV rows keyed by M: one row per M with means, interval bounds and decomposition."""
    rows = []
    for M, s in sorted(summaries.items()):
        row = {"M": M, "replications": s.replications}
        for b, name in enumerate(s.param_names):
            row[f"{name}_mean"] = s.mean[b]
            row[f"{name}_lower"] = s.lower[b]
            row[f"{name}_upper"] = s.upper[b]
        for key in ("log_ml", "log_lik", "log_prior"):
            m, sd = getattr(s, key)
            row[key] = m
            row[f"{key}_sd"] = sd
        rows.append(row)
    return rows


def format_table(summaries: dict, truth: Optional[Sequence[float]] = None) -> str:
    """Text table: per M, posterior means over their intervals, then log ML / Likelihood / Prior."""
    if not summaries:
        return ""
    first = next(iter(summaries.values()))
    names = first.param_names
    head = ["M"] + list(names) + ["log ML", "log Likelihood", "log Prior"]
    lines = [head]
    if truth is not None:
        lines.append([""] + [f"[{t:.4g}]" for t in truth] + ["", "", ""])
    for M, s in sorted(summaries.items()):
        lines.append([str(M)] + [f"{v:.4g}" for v in s.mean]
                     + [f"{getattr(s, k)[0]:.2f}" for k in ("log_ml", "log_lik", "log_prior")])
        lines.append([""] + [f"({a:.4g}, {b:.4g})" for a, b in zip(s.lower, s.upper)]
                     + [f"(±{getattr(s, k)[1]:.2f})" for k in ("log_ml", "log_lik", "log_prior")])
    widths = [max(len(r[i]) for r in lines) for i in range(len(head))]
    buf = io.StringIO()
    for i, r in enumerate(lines):
        buf.write(" | ".join(c.rjust(w) for c, w in zip(r, widths)) + "\n")
        if i == 0:
            buf.write("-+-".join("-" * w for w in widths) + "\n")
    return buf.getvalue()
