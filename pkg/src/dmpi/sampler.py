"""The conditional posterior kernel over parameter draws and its SMC–MH sampler.

A particle is an ``(M, B)`` matrix holding ``M`` draws of the ``B`` structural
parameters. Its log kernel is the sum of two parts:

* likelihood part: per moment, the JS log-likelihood between the fixed
  empirical histogram and the additively smoothed histogram of the moments
  implied by the ``M`` draws;
* prior part: per parameter, the JS log-prior between the reference-sample
  histogram and the unsmoothed histogram of the ``M`` draws.

With ``Z = 1`` the SMC–MH loop is a plain random-walk Metropolis–Hastings chain.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import gammaln

from . import _fastkernel
from .divergence import _scaled_js
from .errors import AllParticlesDead, DegenerateWeights, InvalidSmoothing
from .histograms import GridStack, MomentPanel
from .priors import ReferenceSample

log = logging.getLogger(__name__)

LIKELIHOODS = ("js", "polya", "kl")


class PosteriorKernel:
    """Log posterior kernel of a parameter-draw matrix given fixed empirical moments.

    ``moment_fn`` maps an ``(M, B)`` array to ``(M, I)`` moments and
    ``valid_fn`` returns a row mask (an ``all_valid`` method, if present, is
    used as a shortcut); a matrix with any invalid row has kernel ``-inf``. ``likelihood`` selects the JS approximation (default), the exact
    Pólya form, or the hard-restriction KL limit.
    """

    def __init__(self, empirical: MomentPanel, reference: ReferenceSample, moment_fn: Callable,
                 valid_fn: Optional[Callable] = None, delta: float = 1.0, likelihood: str = "js",
                 row_model=None):
        if likelihood not in LIKELIHOODS:
            raise ValueError(f"likelihood must be one of {LIKELIHOODS}")
        self.empirical = empirical
        self.reference = reference
        self.moment_fn = moment_fn
        self.valid_fn = valid_fn
        self.likelihood = likelihood
        if row_model is None and hasattr(valid_fn, "row_model"):
            row_model = valid_fn.row_model()
        self.row_model = row_model
        self.moment_stack: GridStack = empirical.stack
        self.param_stack: GridStack = reference.stack
        self.n = empirical.counts.astype(float)
        self.N = int(empirical.counts[0].sum())
        self.zeta = self.n / self.N
        self.xi = reference.histograms
        self.H = reference.H
        self.K = self.moment_stack.K
        self._m_lower, self._m_inv = self.moment_stack.lower, 1.0 / self.moment_stack.width
        self._p_lower, self._p_inv = self.param_stack.lower, 1.0 / self.param_stack.width
        self.set_delta(delta)

    @property
    def I(self):
        return self.n.shape[0]

    @property
    def B(self):
        return len(self.param_stack)

    def set_delta(self, delta):
        if not delta > 0:
            raise InvalidSmoothing(f"smoothing delta must be positive, got {delta}")
        self.delta = float(delta)

    def theory_counts(self, theta):
        return self.moment_stack.counts(self.moment_fn(theta))

    def log_likelihood(self, theta, counts=None):
        if counts is None and self.likelihood == "js":
            m = np.ascontiguousarray(self.moment_fn(theta), dtype=float)
            return float(_fastkernel.js_loglik(m, self._m_lower, self._m_inv, self.zeta, self.N, self.delta))
        counts = self.theory_counts(theta) if counts is None else counts
        M = theta.shape[0]
        alpha = counts + self.delta
        scale = M + self.delta * self.K
        if self.likelihood == "polya":
            per = (gammaln(self.N + 1.0) + gammaln(scale) - gammaln(self.N + scale)
                   + (gammaln(self.n + alpha) - gammaln(self.n + 1.0) - gammaln(alpha)).sum(axis=1))
            return float(per.sum())
        q = alpha / scale
        if self.likelihood == "kl":
            pos = self.zeta > 0
            with np.errstate(divide="ignore"):
                kl = (self.zeta[pos] * (np.log(self.zeta[pos]) - np.log(q[pos]))).sum()
            return float(self.I * math.log(self.N) - self.N * kl)
        lam = scale / self.N
        return float(self.I * math.log(self.N) - self.N * _scaled_js(self.zeta, q, lam).sum())

    def log_likelihood_reference(self, theta):
        """Pure-numpy evaluation of the likelihood part, kept as a cross-check."""
        return self.log_likelihood(theta, counts=self.theory_counts(theta))

    def log_prior(self, theta):
        return float(_fastkernel.js_logprior(np.ascontiguousarray(theta, dtype=float), self._p_lower,
                                             self._p_inv, self.xi, self.H))

    def log_prior_reference(self, theta):
        """Pure-numpy evaluation of :meth:`log_prior`, kept as a cross-check."""
        M = theta.shape[0]
        omega = self.param_stack.counts(theta) / M
        tau = M / self.H
        return float(self.B * math.log(self.H) - self.H * _scaled_js(self.xi, omega, tau).sum())

    def evaluate(self, theta):
        """``(log_likelihood, log_prior)``; both ``-inf`` for an invalid matrix."""
        theta = np.asarray(theta, dtype=float)
        if self.valid_fn is not None:
            check = getattr(self.valid_fn, "all_valid", None)
            ok = check(theta) if check is not None else np.all(self.valid_fn(theta))
            if not ok:
                return -math.inf, -math.inf
        return self.log_likelihood(theta), self.log_prior(theta)

    def __call__(self, theta):
        ll, lp = self.evaluate(theta)
        return ll + lp

    def evaluate_many(self, thetas):
        out = np.array([self.evaluate(t) for t in thetas])
        return out[:, 0], out[:, 1]


def conditional_log_posterior(theta_set, empirical: MomentPanel, reference: ReferenceSample,
                              moment_fn, delta=1.0, valid_fn=None):
    return PosteriorKernel(empirical, reference, moment_fn, valid_fn, delta)(theta_set)


@dataclass
class ParticleSet:
    """``Z`` particles of shape ``(M, B)`` with weights and cached kernel parts."""

    particles: np.ndarray
    weights: np.ndarray
    loglik: np.ndarray
    logprior: np.ndarray

    @classmethod
    def from_particles(cls, particles, kernel):
        particles = np.asarray(particles, dtype=float)
        if particles.ndim == 2:
            particles = particles[None]
        ll, lp = kernel.evaluate_many(particles)
        return cls(particles, np.ones(len(particles)), ll, lp)

    @property
    def Z(self):
        return self.particles.shape[0]

    @property
    def log_kernel(self):
        return self.loglik + self.logprior

    def copy(self):
        return ParticleSet(self.particles.copy(), self.weights.copy(), self.loglik.copy(), self.logprior.copy())


def ess(weights) -> float:
    """Effective sample size ``Z / ((1/Z) sum W^2)`` after normalising to mean one."""
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if not total > 0:
        raise DegenerateWeights("all particle weights are zero")
    w = w * (len(w) / total)
    return float(len(w) / np.mean(w * w))


def normalized_weights(log_kernel, prior_weights):
    """Correction step in log space: ``W_z ∝ kernel_z W_z``, rescaled to mean one."""
    log_kernel = np.asarray(log_kernel, dtype=float)
    prior_weights = np.asarray(prior_weights, dtype=float)
    with np.errstate(divide="ignore"):
        logw = log_kernel + np.log(prior_weights)
    top = np.max(logw)
    if not np.isfinite(top):
        raise AllParticlesDead("every particle has zero posterior kernel")
    w = np.exp(logw - top)
    return w * (len(w) / w.sum())


def correct(ps: ParticleSet) -> ParticleSet:
    out = ps.copy()
    out.weights = normalized_weights(ps.log_kernel, ps.weights)
    return out


def resample_indices(weights, rng, method="multinomial"):
    w = np.asarray(weights, dtype=float)
    p = w / w.sum()
    Z = len(w)
    if method == "multinomial":
        return rng.choice(Z, size=Z, p=p)
    if method == "systematic":
        u = (rng.random() + np.arange(Z)) / Z
        return np.minimum(np.searchsorted(np.cumsum(p), u), Z - 1)
    raise ValueError(f"unknown resampling method {method!r}")


def select(ps: ParticleSet, rng, method="multinomial") -> ParticleSet:
    """Resample with replacement by ``W/Z`` and reset weights to one."""
    idx = resample_indices(ps.weights, rng, method)
    return ParticleSet(ps.particles[idx].copy(), np.ones(ps.Z), ps.loglik[idx].copy(), ps.logprior[idx].copy())


def mutate(ps: ParticleSet, kernel, psi, omega, rng, proposal="joint"):
    """One Gaussian random-walk MH step for every particle.

    Proposal sd for column ``b`` is ``psi * omega[b]``. With ``proposal="joint"``
    every entry of the particle's ``(M, B)`` matrix moves at once and is
    accepted or rejected as a whole. With ``"rowwise"`` the rows are updated one
    after another, each with its own accept/reject step (a block-diagonal
    scheme; each block update leaves the posterior invariant).
    Returns ``(new_set, n_accepted)``, where acceptances count particles or rows.
    Randomness is consumed as proposal noise for all particles, then the
    uniforms.
    """
    omega = np.asarray(omega, dtype=float)
    if proposal == "rowwise":
        return _mutate_rowwise(ps, kernel, psi, omega, rng)
    if proposal != "joint":
        raise ValueError(f"unknown proposal {proposal!r}")
    noise = rng.standard_normal(ps.particles.shape)
    u = rng.random(ps.Z)
    proposals = ps.particles + psi * omega * noise
    out = ps.copy()
    accepted = 0
    for z in range(ps.Z):
        ll, lp = kernel.evaluate(proposals[z])
        new = ll + lp
        old = ps.loglik[z] + ps.logprior[z]
        if accept_move(old, new, u[z]):
            out.particles[z] = proposals[z]
            out.loglik[z], out.logprior[z] = ll, lp
            accepted += 1
    return out, accepted


def _mutate_rowwise(ps: ParticleSet, kernel, psi, omega, rng):
    if kernel.row_model is None or kernel.likelihood != "js":
        raise ValueError("rowwise proposals need a compiled row model and the js likelihood")
    moment_row, valid_row, aux = kernel.row_model
    noise = rng.standard_normal(ps.particles.shape)
    with np.errstate(divide="ignore"):
        logu = np.log(rng.random(ps.particles.shape[:2]))
    out = ps.copy()
    step = psi * omega
    accepted = 0
    for z in range(ps.Z):
        if not np.isfinite(ps.loglik[z] + ps.logprior[z]):
            continue
        theta = np.ascontiguousarray(out.particles[z])
        accepted += _fastkernel.rowwise_sweep(
            theta, kernel.zeta, kernel.xi, kernel._m_lower, kernel._m_inv, kernel._p_lower, kernel._p_inv,
            float(kernel.N), float(kernel.H), kernel.delta, step, noise[z], logu[z],
            moment_row, valid_row, aux)
        out.particles[z] = theta
        out.loglik[z], out.logprior[z] = kernel.evaluate(theta)
    return out, accepted


def accept_move(old_log_kernel, new_log_kernel, u) -> bool:
    """MH rule ``u <= min(1, k_new/k_old)`` with ``-inf`` kernels handled explicitly."""
    if new_log_kernel == -math.inf:
        return False
    if old_log_kernel == -math.inf:
        return True
    return math.log(u) <= min(0.0, new_log_kernel - old_log_kernel) if u > 0 else True


def abc_accept(m_a, m_e, stack: GridStack) -> bool:
    """True iff every moment of ``m_a`` falls in the same bin as in ``m_e``."""
    a = stack.indices(np.atleast_2d(m_a))
    e = stack.indices(np.atleast_2d(m_e))
    return bool(np.all(a == e))


@dataclass
class AdaptSettings:
    """Tuning schedules applied during burn-in only.

    ``psi`` is rescaled every ``window`` iterations by ``rate/target`` (clipped to
    [0.5, 2]) when the window's acceptance rate leaves ``acceptance_band``.
    The smoothing schedule adds ``delta_increase`` whenever the window rate
    drops below ``delta_min_acceptance`` and otherwise decays every
    ``delta_decay_every`` iterations, either multiplicatively by
    ``1 - delta_decay`` or by subtracting ``delta_decay``.
    """

    adapt_psi: bool = True
    acceptance_band: Sequence[float] = (0.08, 0.12)
    window: int = 1000
    delta_schedule: bool = False
    delta_start: float = 1.0
    delta_floor: float = 1.0
    delta_increase: float = 100.0
    delta_min_acceptance: float = 0.001
    delta_decay: float = 0.1
    delta_decay_mode: str = "multiply"
    delta_decay_every: int = 1000

    def decayed(self, delta):
        if self.delta_decay_mode == "multiply":
            delta = delta * (1.0 - self.delta_decay)
        elif self.delta_decay_mode == "subtract":
            delta = delta - self.delta_decay
        else:
            raise ValueError(f"unknown delta_decay_mode {self.delta_decay_mode!r}")
        return max(self.delta_floor, delta)


@dataclass
class SmcSettings:
    iterations: int = 50_000
    burn_in: int = 25_000
    psi: float = 1.0
    omega: Optional[np.ndarray] = None
    ess_fraction: float = 0.5
    resampling: str = "multinomial"
    reference_delta: float = 1.0
    store_max: int = 5000
    proposal: str = "joint"


@dataclass
class SmcOutput:
    """Post-burn-in draws with their kernel parts, plus the per-iteration trace."""

    iteration: np.ndarray
    particle: np.ndarray
    draws: np.ndarray
    loglik: np.ndarray
    logprior: np.ndarray
    trace: dict
    final: ParticleSet
    psi: float
    delta: float
    acceptance_rate: float

    @property
    def log_kernel(self):
        return self.loglik + self.logprior


def smc_mh_run(init: ParticleSet, kernel: PosteriorKernel, settings: SmcSettings, rng,
               adapt: Optional[AdaptSettings] = None) -> SmcOutput:
    """Iterate correction, selection and (conditional) mutation.

    Mutation runs whenever the ESS of the corrected weights falls below
    ``ess_fraction * Z``; with a single particle it runs every iteration.
    Tuning happens only during burn-in; at the end of burn-in the smoothing
    parameter is set to ``reference_delta`` so stored kernel values are
    comparable across runs.
    """
    adapt = adapt or AdaptSettings(adapt_psi=False)
    J, burn = settings.iterations, settings.burn_in
    if not 0 <= burn < J:
        raise ValueError(f"burn_in must lie in [0, iterations), got {burn} of {J}")
    Z = init.Z
    M, B = init.particles.shape[1:]
    omega = np.ones(B) if settings.omega is None else np.asarray(settings.omega, dtype=float)
    psi = float(settings.psi)
    threshold = settings.ess_fraction * Z

    delta = adapt.delta_start if adapt.delta_schedule else settings.reference_delta
    ps = _reevaluate(init, kernel, delta)

    kept = J - burn
    thin = max(1, math.ceil(kept * Z / settings.store_max))
    n_store = len(range(burn, J, thin))
    store_draws = np.empty((n_store, Z, M, B))
    store_ll = np.empty((n_store, Z))
    store_lp = np.empty((n_store, Z))
    store_iter = np.empty(n_store, dtype=np.int64)

    trace = {k: np.empty(J) for k in ("ess", "acceptance_rate", "delta", "psi", "log_kernel_mean")}
    win_acc = win_prop = 0
    tot_acc = tot_prop = 0
    recent = np.zeros(adapt.window)
    recent_prop = np.zeros(adapt.window)
    s = 0

    for n in range(J):
        if n == burn and delta != settings.reference_delta:
            delta = settings.reference_delta
            ps = _reevaluate(ps, kernel, delta)
        if Z > 1:
            ps = correct(ps)
            e = ess(ps.weights)
            ps = select(ps, rng, settings.resampling)
        else:
            e = 1.0
        acc = prop = 0
        if Z == 1 or e < threshold:
            ps, acc = mutate(ps, kernel, psi, omega, rng, settings.proposal)
            prop = Z * M if settings.proposal == "rowwise" else Z
        if not np.any(np.isfinite(ps.log_kernel)):
            raise AllParticlesDead(f"all particles dead at iteration {n}", diagnostics=_trace_slice(trace, n))

        slot = n % adapt.window
        recent[slot], recent_prop[slot] = acc, prop
        win_acc += acc
        win_prop += prop
        if n >= burn:
            tot_acc += acc
            tot_prop += prop

        if n < burn and (n + 1) % adapt.window == 0:
            rate = win_acc / win_prop if win_prop else 0.0
            if adapt.adapt_psi:
                psi = _tuned_psi(psi, rate, adapt.acceptance_band)
            if adapt.delta_schedule and rate < adapt.delta_min_acceptance:
                delta += adapt.delta_increase
                ps = _reevaluate(ps, kernel, delta)
            win_acc = win_prop = 0
        if (adapt.delta_schedule and n < burn and (n + 1) % adapt.delta_decay_every == 0
                and delta > adapt.delta_floor):
            delta = adapt.decayed(delta)
            ps = _reevaluate(ps, kernel, delta)

        trace["ess"][n] = e
        rp = recent_prop.sum()
        trace["acceptance_rate"][n] = recent.sum() / rp if rp else 0.0
        trace["delta"][n] = delta
        trace["psi"][n] = psi
        lk = ps.log_kernel
        trace["log_kernel_mean"][n] = lk[np.isfinite(lk)].mean()

        if n >= burn and (n - burn) % thin == 0:
            store_draws[s] = ps.particles
            store_ll[s] = ps.loglik
            store_lp[s] = ps.logprior
            store_iter[s] = n
            s += 1

    rate = tot_acc / tot_prop if tot_prop else 0.0
    log.debug("smc_mh_run: M=%d Z=%d acceptance=%.3f psi=%.4g", M, Z, rate, psi)
    return SmcOutput(
        iteration=np.repeat(store_iter, Z),
        particle=np.tile(np.arange(Z), n_store),
        draws=store_draws.reshape(n_store * Z, M, B),
        loglik=store_ll.ravel(),
        logprior=store_lp.ravel(),
        trace=trace,
        final=ps,
        psi=psi,
        delta=delta,
        acceptance_rate=rate,
    )


def _reevaluate(ps: ParticleSet, kernel: PosteriorKernel, delta) -> ParticleSet:
    kernel.set_delta(delta)
    ll, lp = kernel.evaluate_many(ps.particles)
    return ParticleSet(ps.particles, ps.weights, ll, lp)


def _tuned_psi(psi, rate, band):
    low, high = band
    if low <= rate <= high:
        return psi
    target = 0.5 * (low + high)
    return psi * float(np.clip(rate / target, 0.5, 2.0))


def _trace_slice(trace, n):
    return {k: v[:n] for k, v in trace.items()}


def rw_mh(theta0, kernel, iterations, burn_in, psi, omega, rng, adapt=None, store_max=5000, proposal="joint"):
    """Single-chain random-walk MH: the ``Z = 1`` case of :func:`smc_mh_run`."""
    init = ParticleSet.from_particles(np.asarray(theta0, dtype=float)[None], kernel)
    settings = SmcSettings(iterations=iterations, burn_in=burn_in, psi=psi, omega=omega,
                           reference_delta=kernel.delta, store_max=store_max, proposal=proposal)
    return smc_mh_run(init, kernel, settings, rng, adapt)
