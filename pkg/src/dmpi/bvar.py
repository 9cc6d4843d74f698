"""Conjugate normal–inverse-Wishart VAR(1) without intercept.

The posterior is sampled directly: ``Sigma ~ IW(S_n, nu_n)`` then the
coefficients from their matric-normal conditional. Each draw maps to the five
moments ``[a12, a22, sigma11_sq, sigma12, sigma22_sq]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import invwishart

from .errors import DegenerateDesign
from .histograms import GridStack, MomentPanel


@dataclass(frozen=True)
class NiwHyper:
    """Normal–inverse-Wishart prior.

    The defaults are deliberately weak relative to the NKPC calibration, whose
    innovation variances are of order 1e-7.
    """

    coef_mean: np.ndarray = None
    precision: float = 1e-12
    iw_scale: float = 1e-10
    iw_df: float = 5.0

    def __post_init__(self):
        if self.precision < 0:
            raise ValueError("coefficient prior precision must be >= 0")
        if not self.iw_scale > 0:
            raise ValueError("inverse-Wishart scale must be positive definite")
        if not self.iw_df > 3:
            raise ValueError("inverse-Wishart degrees of freedom must exceed dimension + 1")


@dataclass(frozen=True)
class VarDraw:
    A: np.ndarray
    Sigma: np.ndarray


class VarDraws:
    """``N`` posterior draws stored as stacked arrays; indexing yields VarDraw."""

    def __init__(self, A, Sigma, rejected=0):
        self.A = np.asarray(A).reshape(-1, 2, 2)
        self.Sigma = np.asarray(Sigma).reshape(-1, 2, 2)
        self.rejected = rejected

    def __len__(self):
        return self.A.shape[0]

    def __getitem__(self, i):
        return VarDraw(self.A[i], self.Sigma[i])

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def moments(self) -> np.ndarray:
        A, S = self.A, self.Sigma
        return np.column_stack([A[:, 0, 1], A[:, 1, 1], S[:, 0, 0], S[:, 0, 1], S[:, 1, 1]])


def ols(data):
    """Least-squares VAR(1) coefficients ``A`` and residual covariance."""
    data = np.asarray(data, dtype=float)
    X, Y = data[:-1], data[1:]
    B, *_ = np.linalg.lstsq(X, Y, rcond=None)
    resid = Y - X @ B
    return B.T, resid.T @ resid / (len(Y) - X.shape[1])


def niw_posterior(data, hyper: NiwHyper):
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise DegenerateDesign(f"expected a (T, 2) series, got shape {data.shape}")
    if data.shape[0] <= 10:
        raise DegenerateDesign(f"need more than 10 observations, got {data.shape[0]}")
    if not np.all(np.isfinite(data)):
        raise DegenerateDesign("data contain non-finite values")
    X, Y = data[:-1], data[1:]
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise DegenerateDesign("lagged regressors are collinear (constant or degenerate data)")
    B0 = np.zeros((2, 2)) if hyper.coef_mean is None else np.asarray(hyper.coef_mean, dtype=float)
    P0 = hyper.precision * np.eye(2)
    Pn = X.T @ X + P0
    Vn = np.linalg.inv(Pn)
    Bn = Vn @ (X.T @ Y + P0 @ B0)
    Sn = hyper.iw_scale * np.eye(2) + Y.T @ Y + B0.T @ P0 @ B0 - Bn.T @ Pn @ Bn
    Sn = 0.5 * (Sn + Sn.T)
    return Bn, Vn, Sn, hyper.iw_df + Y.shape[0]


def _is_pd(S):
    return (S[..., 0, 0] > 0) & (S[..., 0, 0] * S[..., 1, 1] - S[..., 0, 1] ** 2 > 0)


def posterior_sample_var(data, hyper: NiwHyper, N: int, rng) -> VarDraws:
    if N == 0:
        return VarDraws(np.empty((0, 2, 2)), np.empty((0, 2, 2)))
    Bn, Vn, Sn, nu = niw_posterior(data, hyper)
    iw = invwishart(df=nu, scale=Sn)
    L_V = np.linalg.cholesky(Vn)
    sigmas, rejected = [], 0
    need = N
    while need > 0:
        S = iw.rvs(size=need, random_state=rng).reshape(-1, 2, 2)
        ok = _is_pd(S)
        rejected += int(np.count_nonzero(~ok))
        sigmas.append(S[ok])
        need -= int(ok.sum())
    Sigma = np.concatenate(sigmas)[:N]
    L_S = np.linalg.cholesky(Sigma)
    Z = rng.standard_normal((N, 2, 2))
    B = Bn + np.einsum("ij,njk,nlk->nil", L_V, Z, L_S)
    return VarDraws(np.transpose(B, (0, 2, 1)), Sigma, rejected)


def draw_to_moments(d: VarDraw) -> np.ndarray:
    return np.array([d.A[0, 1], d.A[1, 1], d.Sigma[0, 0], d.Sigma[0, 1], d.Sigma[1, 1]])


def build_empirical_panel(draws: VarDraws, stack: GridStack) -> MomentPanel:
    return MomentPanel.from_draws(draws.moments(), stack)
