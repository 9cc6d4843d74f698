"""Compiled hot path for the posterior kernel: binning, counting and the JS sums in one pass."""
from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _bin_counts(x, lower, inv_width, K):
    n, I = x.shape
    counts = np.zeros((I, K))
    for j in range(n):
        for i in range(I):
            k = math.floor((x[j, i] - lower[i]) * inv_width[i])
            if k < 0:
                k = 0
            elif k > K - 1:
                k = K - 1
            counts[i, int(k)] += 1.0
    return counts


@njit(cache=True)
def _log_ratio(x, r, den, w):
    """``log1p(r)``, or ``log(x (1 + w) / den)`` when ``r`` is near -1."""
    if r < -0.5:
        return math.log(x) + math.log1p(w) - math.log(den)
    return math.log1p(r)


@njit(cache=True)
def _bin_term(p, q, w):
    """One bin's contribution to ``(1 + w) D_JS^w``."""
    den = p + w * q
    if den <= 0.0:
        return 0.0
    out = 0.0
    if p > 0.0:
        out += p * _log_ratio(p, w * (p - q) / den, den, w)
    if q > 0.0:
        out += w * q * _log_ratio(q, (q - p) / den, den, w)
    return out


@njit(cache=True)
def _scaled_js_sum(p, q, w):
    """Sum over rows of ``(1 + w) D_JS^w(p_i || q_i)`` with ``0 ln 0 = 0``."""
    total = 0.0
    I, K = p.shape
    for i in range(I):
        for k in range(K):
            total += _bin_term(p[i, k], q[i, k], w)
    return total


@njit(cache=True)
def js_loglik(moments, lower, inv_width, zeta, N, delta):
    """``sum_i [ln N - N (1+lam) D_JS^lam(zeta_i || q_i)]`` for smoothed theory histograms."""
    M = moments.shape[0]
    I, K = zeta.shape
    counts = _bin_counts(moments, lower, inv_width, K)
    scale = M + delta * K
    q = (counts + delta) / scale
    return I * math.log(N) - N * _scaled_js_sum(zeta, q, scale / N)


@njit(cache=True)
def js_logprior(theta, lower, inv_width, xi, H):
    """``sum_b [ln H - H (1+tau) D_JS^tau(xi_b || omega_b)]`` with unsmoothed ``omega``."""
    M = theta.shape[0]
    B, K = xi.shape
    omega = _bin_counts(theta, lower, inv_width, K) / M
    return B * math.log(H) - H * _scaled_js_sum(xi, omega, M / H)


@njit(cache=True)
def _bin_of(x, lower, inv_width, K):
    k = math.floor((x - lower) * inv_width)
    if k < 0:
        return 0
    if k > K - 1:
        return K - 1
    return int(k)


@njit(cache=True)
def rowwise_sweep(theta, zeta, xi, m_lower, m_inv, p_lower, p_inv, N, H, delta,
                  step, noise, logu, moment_row, valid_row, aux):
    """One Metropolis-within-Gibbs pass over the rows of ``theta`` (modified in place).

    Row ``j`` proposes ``theta[j] + step * noise[j]`` and is accepted when
    ``logu[j]`` does not exceed the change in the log kernel. Only the bins a
    row moves between are re-evaluated. Returns the number of accepted rows.
    """
    M, B = theta.shape
    I, K = zeta.shape
    S = M + delta * K
    lam = S / N
    tau = M / H
    cm = np.zeros((I, K))
    cp = np.zeros((B, K))
    midx = np.empty((M, I), dtype=np.int64)
    pidx = np.empty((M, B), dtype=np.int64)
    mom = np.empty(I)
    for j in range(M):
        moment_row(theta[j], aux, mom)
        for i in range(I):
            k = _bin_of(mom[i], m_lower[i], m_inv[i], K)
            midx[j, i] = k
            cm[i, k] += 1.0
        for b in range(B):
            k = _bin_of(theta[j, b], p_lower[b], p_inv[b], K)
            pidx[j, b] = k
            cp[b, k] += 1.0
    prop = np.empty(B)
    new_m = np.empty(I, dtype=np.int64)
    new_p = np.empty(B, dtype=np.int64)
    accepted = 0
    for j in range(M):
        for b in range(B):
            prop[b] = theta[j, b] + step[b] * noise[j, b]
        if not valid_row(prop, aux):
            continue
        moment_row(prop, aux, mom)
        d_like = 0.0
        for i in range(I):
            a = midx[j, i]
            k = _bin_of(mom[i], m_lower[i], m_inv[i], K)
            new_m[i] = k
            if a != k:
                z = zeta[i, a]
                d_like += _bin_term(z, (cm[i, a] - 1.0 + delta) / S, lam) - _bin_term(z, (cm[i, a] + delta) / S, lam)
                z = zeta[i, k]
                d_like += _bin_term(z, (cm[i, k] + 1.0 + delta) / S, lam) - _bin_term(z, (cm[i, k] + delta) / S, lam)
        d_prior = 0.0
        for b in range(B):
            a = pidx[j, b]
            k = _bin_of(prop[b], p_lower[b], p_inv[b], K)
            new_p[b] = k
            if a != k:
                x = xi[b, a]
                d_prior += _bin_term(x, (cp[b, a] - 1.0) / M, tau) - _bin_term(x, cp[b, a] / M, tau)
                x = xi[b, k]
                d_prior += _bin_term(x, (cp[b, k] + 1.0) / M, tau) - _bin_term(x, cp[b, k] / M, tau)
        if logu[j] <= -N * d_like - H * d_prior:
            accepted += 1
            for b in range(B):
                theta[j, b] = prop[b]
                cp[b, pidx[j, b]] -= 1.0
                cp[b, new_p[b]] += 1.0
                pidx[j, b] = new_p[b]
            for i in range(I):
                cm[i, midx[j, i]] -= 1.0
                cm[i, new_m[i]] += 1.0
                midx[j, i] = new_m[i]
    return accepted
