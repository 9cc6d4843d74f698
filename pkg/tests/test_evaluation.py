import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import multivariate_normal

from dmpi.errors import EmptyReplications, InsufficientDraws
from dmpi.evaluation import (PosteriorStore, ReplicationResult, aggregate_replications, decompose,
                             format_table, log_marginal_likelihood_mhm, summary_rows, twice_log_bayes_factor)


def normal_store(n=20000, d=3, log_c=0.0, seed=0, scale=None):
    rng = np.random.default_rng(seed)
    cov = np.diag(np.linspace(0.5, 2.0, d))
    x = rng.multivariate_normal(np.zeros(d), cov, size=n)
    logk = multivariate_normal(np.zeros(d), cov).logpdf(x) + log_c
    return PosteriorStore(x, logk, np.zeros(n), scale=scale)


def test_normalised_target_gives_zero():
    vals = [log_marginal_likelihood_mhm(normal_store(seed=s)) for s in range(5)]
    assert abs(np.mean(vals)) < 0.02


def test_constant_shifts_log_ml():
    a = log_marginal_likelihood_mhm(normal_store(seed=1))
    b = log_marginal_likelihood_mhm(normal_store(seed=1, log_c=7.5))
    assert b - a == pytest.approx(7.5)


def test_units_change_log_ml_by_the_jacobian():
    raw = log_marginal_likelihood_mhm(normal_store(seed=2, d=2))
    scaled = log_marginal_likelihood_mhm(normal_store(seed=2, d=2, scale=np.array([0.1, 4.0])))
    assert scaled - raw == pytest.approx(-math.log(0.1 * 4.0))


def test_mhm_failures_and_ridge():
    with pytest.raises(InsufficientDraws):
        log_marginal_likelihood_mhm(normal_store(n=4, d=3))
    with pytest.raises(ValueError):
        log_marginal_likelihood_mhm(normal_store(), truncation_prob=1.0)
    rng = np.random.default_rng(3)
    x = rng.standard_normal((500, 1))
    flat = PosteriorStore(np.hstack([x, x]), np.zeros(500), np.zeros(500))
    res = log_marginal_likelihood_mhm(flat, detail=True)
    assert res.ridge and np.isfinite(res.log_ml)


def test_three_dimensional_store_is_flattened():
    s = PosteriorStore(np.zeros((10, 4, 2)), np.zeros(10), np.zeros(10))
    assert s.draws.shape == (10, 8) and (s.M, s.B) == (4, 2)
    assert s.parameter_draws().shape == (40, 2)


def test_bayes_factor_and_decomposition():
    assert twice_log_bayes_factor(-10.0, -12.5) == 5.0
    assert twice_log_bayes_factor(-12.5, -10.0) == -5.0
    s = PosteriorStore(np.zeros((3, 1)), [-1.0, -2.0, -3.0], [0.5, 0.5, 2.0])
    ll, lp = decompose(s)
    assert (ll, lp) == (-2.0, 1.0)
    assert ll + lp == pytest.approx(s.log_kernel.mean())


def run(pm, ml=0.0):
    return ReplicationResult(np.asarray(pm, dtype=float), ml, ml - 1, 1.0, ("a", "b"))


def test_single_replication_collapses():
    s = aggregate_replications([run([0.3, 0.7], -5.0)])
    np.testing.assert_array_equal(s.mean, s.lower)
    np.testing.assert_array_equal(s.mean, s.upper)
    assert s.log_ml == (-5.0, 0.0)
    with pytest.raises(EmptyReplications):
        aggregate_replications([])


def test_aggregate_normal_runs():
    rng = np.random.default_rng(4)
    pm = rng.normal([1.0, -2.0], 0.1, size=(30, 2))
    s = aggregate_replications([run(p) for p in pm])
    assert np.all(np.abs(s.mean - [1.0, -2.0]) < 3 * 0.1 / math.sqrt(30))
    assert np.all(s.lower < s.mean) and np.all(s.mean < s.upper)
    assert s.replications == 30


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=2, max_size=12), st.randoms())
def test_aggregate_ignores_order(values, rnd):
    runs = [run([v, 2 * v], v) for v in values]
    shuffled = runs[:]
    rnd.shuffle(shuffled)
    a, b = aggregate_replications(runs), aggregate_replications(shuffled)
    np.testing.assert_allclose(a.mean, b.mean)
    np.testing.assert_allclose(a.lower, b.lower)
    assert a.log_ml == pytest.approx(b.log_ml)


def test_summary_rows_and_table():
    summaries = {10: aggregate_replications([run([0.1, 0.2], -3.0), run([0.3, 0.4], -4.0)]),
                 1: aggregate_replications([run([0.5, 0.6], -1.0)])}
    rows = summary_rows(summaries)
    assert [r["M"] for r in rows] == [1, 10]
    assert set(rows[0]) >= {"a_mean", "a_lower", "b_upper", "log_ml", "log_ml_sd", "log_prior_sd"}
    assert rows[1]["log_ml"] == -3.5
    table = format_table(summaries, truth=[0.2, 0.3])
    assert "log ML" in table and "[0.2]" in table
    assert len(table.splitlines()) == 2 + 1 + 2 * 2
    assert format_table({}) == ""
