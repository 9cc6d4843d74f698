"""End-to-end replication: simulate data, build the empirical panel, sample, evaluate.

Seeds: the master seed spawns one stream per replication; each replication
spawns fixed child streams for data simulation, the VAR posterior, the
reference sample, the pilot chain and one stream per entry of ``M_values``.
Results therefore do not depend on how replications are scheduled.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .bvar import NiwHyper, build_empirical_panel, posterior_sample_var
from .config import ExperimentConfig
from .evaluation import (PosteriorStore, ReplicationResult, aggregate_replications,
                         decompose, log_marginal_likelihood_mhm)
from .histograms import GridStack, MomentPanel
from .nkpc import ModelVariant, MomentMap, ValidityCheck, simulate_series
from .priors import ReferenceSample, build_reference_sample, sample_prior
from .sampler import (AdaptSettings, ParticleSet, PosteriorKernel, SmcOutput, SmcSettings,
                      smc_mh_run)

log = logging.getLogger(__name__)

STREAMS = ("data", "bvar", "reference", "pilot")


def replication_streams(cfg: ExperimentConfig, rep: int):
    """Named generators for one replication, plus one sampler stream per M value."""
    root = np.random.SeedSequence(cfg.seed).spawn(rep + 1)[rep]
    children = root.spawn(len(STREAMS) + len(cfg.sampler.M_values))
    named = {name: np.random.default_rng(s) for name, s in zip(STREAMS, children)}
    named["sampler"] = [np.random.default_rng(s) for s in children[len(STREAMS):]]
    return named


@dataclass
class Problem:
    """Everything the sampling stage needs for one replication."""

    series: np.ndarray
    empirical: MomentPanel
    empirical_draws: np.ndarray
    reference: ReferenceSample
    kernel: PosteriorKernel
    omega: np.ndarray
    valid: ValidityCheck
    var_rejected: int = 0


def build_problem(cfg: ExperimentConfig, streams) -> Problem:
    variant = cfg.model_variant
    e = cfg.empirical
    # the data always come from the full-rank model; the variant only changes the theory side
    series = simulate_series(cfg.truth_params(), ModelVariant.CORRECT, e.T, e.burn_in, streams["data"])
    hyper = NiwHyper(precision=e.hyper.precision, iw_scale=e.hyper.iw_scale, iw_df=e.hyper.iw_df)
    var_draws = posterior_sample_var(series, hyper, e.N, streams["bvar"])
    empirical = build_empirical_panel(var_draws, GridStack(cfg.moment_grids()))
    specs = cfg.prior_specs()
    grids = cfg.param_grids()
    reference = build_reference_sample(specs, cfg.H, grids, streams["reference"])
    valid = parameter_check(variant, specs, grids)
    kernel = PosteriorKernel(empirical, reference, MomentMap(variant), valid,
                             delta=cfg.sampler.delta, likelihood=cfg.sampler.likelihood)
    omega = np.array([s.sd for s in specs])
    return Problem(series, empirical, var_draws.moments(), reference, kernel, omega, valid, var_draws.rejected)


def parameter_check(variant, specs, grids) -> ValidityCheck:
    """Model restrictions plus, per parameter, the prior support intersected with its histogram grid.

    Outside the grid the JS prior no longer changes with the draw, so leaving
    those draws in would make the posterior improper for unbounded priors.
    """
    lower = [max(s.truncation[0], g.lower) for s, g in zip(specs, grids)]
    upper = [min(s.truncation[1], g.upper) for s, g in zip(specs, grids)]
    return ValidityCheck(variant, lower, upper)


def prior_rows(cfg: ExperimentConfig, n, rng, valid: ValidityCheck):
    """``n`` joint prior draws satisfying the model restrictions (rejection)."""
    specs = cfg.prior_specs()
    rows = np.empty((0, len(specs)))
    while len(rows) < n:
        cand = np.column_stack([sample_prior(s, rng, 2 * n) for s in specs])
        rows = np.vstack([rows, cand[valid(cand)]])
    return rows[:n]


def adapt_settings(cfg: ExperimentConfig) -> AdaptSettings:
    s, d = cfg.sampler, cfg.sampler.delta_schedule
    return AdaptSettings(
        adapt_psi=s.adapt_psi, acceptance_band=tuple(s.acceptance_band), window=s.window,
        delta_schedule=d.enabled, delta_start=d.start, delta_floor=d.floor,
        delta_increase=d.increase, delta_min_acceptance=d.min_acceptance,
        delta_decay=d.decay, delta_decay_mode=d.decay_mode, delta_decay_every=d.decay_every,
    )


def initial_psi(cfg: ExperimentConfig, M, B):
    """Configured step scale, else 2.38 / sqrt(dim) for the dimension one proposal moves."""
    if cfg.sampler.psi is not None:
        return cfg.sampler.psi
    dim = B if cfg.sampler.proposal == "rowwise" else M * B
    return 2.38 / np.sqrt(dim)


def pilot_pool(cfg: ExperimentConfig, problem: Problem, rng) -> np.ndarray:
    """Single-draw, single-particle RW-MH chain whose draws seed larger-M particles."""
    s = cfg.sampler
    B = len(problem.omega)
    start = np.array([[p.spec().mean for p in cfg.priors]])
    if not problem.valid.all_valid(start):
        start = prior_rows(cfg, 1, rng, problem.valid)
    init = ParticleSet.from_particles(start, problem.kernel)
    settings = SmcSettings(iterations=s.pilot_iterations, burn_in=s.pilot_burn_in,
                           psi=initial_psi(cfg, 1, B), omega=problem.omega,
                           reference_delta=s.delta, store_max=s.store_max, proposal=s.proposal)
    out = smc_mh_run(init, problem.kernel, settings, rng, adapt_settings(cfg))
    return out.draws.reshape(-1, B)


@dataclass
class MResult:
    M: int
    output: SmcOutput
    store: PosteriorStore
    log_ml: float
    log_lik: float
    log_prior: float
    posterior_mean: np.ndarray
    ridge: bool
    runtime: float
    theory_counts: np.ndarray = None


def run_m(cfg: ExperimentConfig, problem: Problem, M: int, rng, pool=None) -> MResult:
    s = cfg.sampler
    B = len(problem.omega)
    t0 = time.perf_counter()
    if s.init == "pilot" and pool is not None:
        start = pool[rng.integers(0, len(pool), size=(s.Z, M))]
    else:
        start = prior_rows(cfg, s.Z * M, rng, problem.valid).reshape(s.Z, M, B)
    problem.kernel.set_delta(s.delta)
    init = ParticleSet.from_particles(start, problem.kernel)
    settings = SmcSettings(iterations=s.iterations, burn_in=s.burn_in, psi=initial_psi(cfg, M, B),
                           omega=problem.omega, ess_fraction=s.ess_fraction, resampling=s.resampling,
                           reference_delta=s.delta, store_max=s.store_max, proposal=s.proposal)
    out = smc_mh_run(init, problem.kernel, settings, rng, adapt_settings(cfg))
    scale = problem.omega if cfg.evaluation.units == "prior_sd" else None
    store = PosteriorStore.from_output(out, scale=scale, config={"M": M, "variant": cfg.variant})
    mhm = log_marginal_likelihood_mhm(store, cfg.evaluation.truncation_prob, detail=True)
    ll, lp = decompose(store)
    theory = np.mean([problem.kernel.theory_counts(d) for d in out.draws[:: max(1, len(out.draws) // 200)]], axis=0)
    return MResult(M, out, store, mhm.log_ml, ll, lp, out.draws.mean(axis=(0, 1)), mhm.ridge,
                   time.perf_counter() - t0, theory)


@dataclass
class ReplicationOutput:
    rep: int
    problem: Problem
    results: Dict[int, MResult] = field(default_factory=dict)


def run_replication(cfg: ExperimentConfig, rep: int, M_values: Optional[List[int]] = None) -> ReplicationOutput:
    streams = replication_streams(cfg, rep)
    problem = build_problem(cfg, streams)
    pool = pilot_pool(cfg, problem, streams["pilot"]) if cfg.sampler.init == "pilot" else None
    out = ReplicationOutput(rep, problem)
    M_all = list(cfg.sampler.M_values)
    for M in (M_values or M_all):
        # a fixed stream per configured M keeps results independent of which subset is run
        rng = streams["sampler"][M_all.index(M)] if M in M_all else np.random.default_rng(
            np.random.SeedSequence([cfg.seed, rep, M]))
        res = run_m(cfg, problem, M, rng, pool)
        log.info("rep %d M=%d logML=%.2f logLik=%.2f logPrior=%.2f (%.1fs)",
                 rep, M, res.log_ml, res.log_lik, res.log_prior, res.runtime)
        out.results[M] = res
    return out


def _run_one(args):
    cfg, rep, M_values = args
    return run_replication(cfg, rep, M_values)


def run_experiment(cfg: ExperimentConfig, M_values=None, threads=1) -> List[ReplicationOutput]:
    jobs = [(cfg, r, M_values) for r in range(cfg.replications)]
    if threads > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(_run_one, jobs))
    return [_run_one(j) for j in jobs]


def summarize(cfg: ExperimentConfig, reps: List[ReplicationOutput]):
    """McSummary per M."""
    Ms = sorted({M for r in reps for M in r.results})
    out = {}
    for M in Ms:
        runs = [ReplicationResult(r.results[M].posterior_mean, r.results[M].log_ml,
                                  r.results[M].log_lik, r.results[M].log_prior, cfg.param_names)
                for r in reps if M in r.results]
        out[M] = aggregate_replications(runs)
    return out
