"""Single-equation NKPC with an AR(1) output gap.

Observables are ``(d_pi, phi)``. The structural model maps parameters to five
population moments of the unrestricted VAR(1):
``[a12, a22, sigma11_sq, sigma12, sigma22_sq]``. The misspecified variant drops
the NKPC shock, so its innovation covariance has rank one.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.signal import lfilter

from .errors import DegenerateCalvo, InvalidParameters
from .histograms import GridStack, MomentPanel

MOMENT_NAMES = ("a12", "a22", "sigma11_sq", "sigma12", "sigma22_sq")


class ModelVariant(str, enum.Enum):
    CORRECT = "CorrectFullRank"
    MISSPECIFIED = "MisspecifiedSingular"

    @property
    def param_names(self):
        names = ("beta", "mu_p", "rho", "sigma_eps", "sigma_v")
        return names if self is ModelVariant.CORRECT else names[:4]


@dataclass(frozen=True)
class NkpcParams:
    beta: float
    mu_p: float
    rho: float
    sigma_eps: float
    sigma_v: float = 0.0

    def as_array(self, variant=ModelVariant.CORRECT):
        values = (self.beta, self.mu_p, self.rho, self.sigma_eps, self.sigma_v)
        return np.array(values[: len(ModelVariant(variant).param_names)])

    def check(self):
        if not valid_rows(self.as_array()[None, :], ModelVariant.CORRECT)[0]:
            raise InvalidParameters(f"parameters violate model restrictions: {self}")


TRUE_CALIBRATION = NkpcParams(beta=0.98, mu_p=0.8, rho=0.8, sigma_eps=0.001, sigma_v=0.00025)


def kappa(beta, mu_p):
    """Slope of the Phillips curve, ``(1 - mu_p)(1 - beta mu_p)/mu_p``."""
    if np.any(np.asarray(mu_p) == 0):
        raise DegenerateCalvo("Calvo probability mu_p = 0 gives an infinite slope")
    return (1 - mu_p) * (1 - beta * mu_p) / mu_p


def loading(beta, mu_p, rho):
    """Impact of the output gap on inflation, ``(1-mu_p)(1-beta mu_p)/(1-beta rho)``.

    This is the coefficient that appears in the five moment conditions; the same
    coefficient drives the simulated data so the full-rank variant is correctly
    specified.
    """
    return (1 - mu_p) * (1 - beta * mu_p) / (1 - beta * rho)


def valid_rows(theta, variant) -> np.ndarray:
    """Row mask of draws satisfying the model restrictions."""
    theta = np.atleast_2d(theta)
    beta, mu_p, rho, s_eps = theta[:, 0], theta[:, 1], theta[:, 2], theta[:, 3]
    ok = (beta > 0) & (beta < 1) & (mu_p > 0) & (mu_p < 1)
    ok &= (rho > -1) & (rho < 1) & (s_eps >= 0) & (1 - beta * rho > 0)
    if ModelVariant(variant) is ModelVariant.CORRECT:
        ok &= theta[:, 4] >= 0
    return ok


def moments_from_array(theta, variant) -> np.ndarray:
    """Vectorised moment map: ``(M, B)`` parameter draws to ``(M, 5)`` moments."""
    variant = ModelVariant(variant)
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    beta, mu_p, rho, s_eps = theta[:, 0], theta[:, 1], theta[:, 2], theta[:, 3]
    c = loading(beta, mu_p, rho)
    var_eps = s_eps * s_eps
    out = np.empty((theta.shape[0], 5))
    out[:, 0] = c * rho
    out[:, 1] = rho
    out[:, 2] = var_eps * c * c
    if variant is ModelVariant.CORRECT:
        out[:, 2] += theta[:, 4] ** 2
    out[:, 3] = var_eps * c
    out[:, 4] = var_eps
    return out


@njit(cache=True)
def _moments_nb(theta, correct):
    M = theta.shape[0]
    out = np.empty((M, 5))
    for j in range(M):
        beta, mu_p, rho, s_eps = theta[j, 0], theta[j, 1], theta[j, 2], theta[j, 3]
        c = (1 - mu_p) * (1 - beta * mu_p) / (1 - beta * rho)
        var_eps = s_eps * s_eps
        out[j, 0] = c * rho
        out[j, 1] = rho
        out[j, 2] = var_eps * c * c
        if correct:
            out[j, 2] += theta[j, 4] ** 2
        out[j, 3] = var_eps * c
        out[j, 4] = var_eps
    return out


@njit(cache=True)
def _all_valid_nb(theta, correct, lower, upper):
    M, B = theta.shape
    for j in range(M):
        beta, mu_p, rho, s_eps = theta[j, 0], theta[j, 1], theta[j, 2], theta[j, 3]
        if not (0 < beta < 1 and 0 < mu_p < 1 and -1 < rho < 1 and s_eps >= 0 and 1 - beta * rho > 0):
            return False
        if correct and theta[j, 4] < 0:
            return False
        for b in range(B):
            if not (lower[b] < theta[j, b] < upper[b]):
                return False
    return True


@njit(cache=True)
def _row_moments(row, aux, out):
    beta, mu_p, rho, s_eps = row[0], row[1], row[2], row[3]
    c = (1 - mu_p) * (1 - beta * mu_p) / (1 - beta * rho)
    var_eps = s_eps * s_eps
    out[0] = c * rho
    out[1] = rho
    out[2] = var_eps * c * c
    if aux[0] > 0:
        out[2] += row[4] ** 2
    out[3] = var_eps * c
    out[4] = var_eps


@njit(cache=True)
def _row_valid(row, aux):
    beta, mu_p, rho, s_eps = row[0], row[1], row[2], row[3]
    if not (0 < beta < 1 and 0 < mu_p < 1 and -1 < rho < 1 and s_eps >= 0 and 1 - beta * rho > 0):
        return False
    B = row.shape[0]
    if aux[0] > 0 and row[4] < 0:
        return False
    for b in range(B):
        if not (aux[1 + b] < row[b] < aux[1 + B + b]):
            return False
    return True


class MomentMap:
    """Compiled moment map for one variant, callable on ``(M, B)`` arrays."""

    def __init__(self, variant):
        self.variant = ModelVariant(variant)
        self._correct = self.variant is ModelVariant.CORRECT

    def __call__(self, theta):
        return _moments_nb(np.ascontiguousarray(theta, dtype=float), self._correct)


class ValidityCheck:
    """Row mask of draws satisfying the model restrictions and lying strictly inside ``(lower, upper)``.

    Bounds are per parameter, typically the prior supports; infinite bounds are allowed.
    """

    def __init__(self, variant, lower=None, upper=None):
        self.variant = ModelVariant(variant)
        B = len(self.variant.param_names)
        self.lower = np.full(B, -np.inf) if lower is None else np.asarray(lower, dtype=float)
        self.upper = np.full(B, np.inf) if upper is None else np.asarray(upper, dtype=float)
        self._correct = self.variant is ModelVariant.CORRECT

    def row_model(self):
        """Compiled single-row moment map and validity test with their shared ``aux`` vector."""
        aux = np.concatenate([[1.0 if self._correct else 0.0], self.lower, self.upper])
        return _row_moments, _row_valid, aux

    def all_valid(self, theta) -> bool:
        return bool(_all_valid_nb(np.ascontiguousarray(theta, dtype=float), self._correct, self.lower, self.upper))

    def __call__(self, theta):
        theta = np.atleast_2d(theta)
        ok = valid_rows(theta, self.variant)
        ok &= np.all((theta > self.lower) & (theta < self.upper), axis=1)
        return ok


def population_moments(p: NkpcParams, variant=ModelVariant.CORRECT) -> np.ndarray:
    p.check()
    return moments_from_array(p.as_array(variant)[None, :], variant)[0]


def simulate_series(p: NkpcParams, variant, T: int, burn_in: int, rng) -> np.ndarray:
    """Simulate the restricted VAR from a zero state; returns a ``(T, 2)`` array."""
    variant = ModelVariant(variant)
    p.check()
    total = T + burn_in
    eps = rng.normal(0.0, 1.0, total) * p.sigma_eps
    phi = lfilter([1.0], [1.0, -p.rho], eps)
    d_pi = loading(p.beta, p.mu_p, p.rho) * phi
    if variant is ModelVariant.CORRECT:
        d_pi = d_pi + rng.normal(0.0, 1.0, total) * p.sigma_v
    return np.column_stack([d_pi, phi])[burn_in:]


def theoretical_panel(theta, variant, stack: GridStack) -> MomentPanel:
    return MomentPanel.from_draws(moments_from_array(theta, variant), stack)
