import math

import numpy as np
import pytest

from conftest import small_kernel
from dmpi import _fastkernel
from dmpi.errors import AllParticlesDead, DegenerateWeights, InvalidSmoothing
from dmpi.histograms import GridStack, SupportGrid
from dmpi.nkpc import ModelVariant, TRUE_CALIBRATION
from dmpi.sampler import (AdaptSettings, ParticleSet, SmcSettings, _tuned_psi, abc_accept, accept_move,
                          ess, normalized_weights, resample_indices, mutate, rw_mh, select, smc_mh_run)


def truth_rows(M, rng, scale=0.02):
    """Rows jittered around the true calibration, kept inside the parameter box."""
    base = TRUE_CALIBRATION.as_array()
    rows = base * (1 + scale * rng.standard_normal((M, len(base))))
    rows[:, 0] = np.clip(rows[:, 0], 0.95, 0.999)
    return rows


def test_ess():
    assert ess(np.ones(10)) == pytest.approx(10)
    assert ess([10] + [0] * 9) == pytest.approx(1)
    w = np.array([2.0, 0, 0, 0])
    assert ess(w) == pytest.approx(1.0)
    assert ess([1, 3]) == pytest.approx(2 / ((0.25 + 2.25) / 2))
    with pytest.raises(DegenerateWeights):
        ess([0, 0])


def test_correction_weights():
    np.testing.assert_allclose(normalized_weights([1.0, 1.0, 1.0], np.ones(3)), 1.0)
    np.testing.assert_allclose(normalized_weights([0.0, math.log(3)], np.ones(2)), [0.5, 1.5])
    a = normalized_weights([-3.0, 2.0, 0.5], [1, 2, 1])
    b = normalized_weights([997.0, 1002.0, 1000.5], [1, 2, 1])
    np.testing.assert_allclose(a, b)
    with pytest.raises(AllParticlesDead):
        normalized_weights([-np.inf, -np.inf], [1, 1])


@pytest.mark.parametrize("method", ["multinomial", "systematic"])
def test_resampling(method):
    rng = np.random.default_rng(0)
    Z = 5
    p = np.array([0.1, 0.2, 0.3, 0.15, 0.25])
    reps = 20000
    counts = np.zeros(Z)
    for _ in range(reps):
        counts += np.bincount(resample_indices(p * Z, rng, method), minlength=Z)
    expected = reps * Z * p
    # multinomial variance bounds the systematic one
    se = np.sqrt(reps * Z * p * (1 - p))
    assert np.all(np.abs(counts - expected) < 4 * se)
    assert np.all(resample_indices([5, 0, 0, 0, 0], rng, method) == 0)
    a = resample_indices(p, np.random.default_rng(9), method)
    b = resample_indices(p, np.random.default_rng(9), method)
    assert np.array_equal(a, b)


def test_accept_move_edges():
    assert accept_move(0.0, 0.0, 0.999)
    assert not accept_move(0.0, -np.inf, 0.0)
    assert accept_move(-np.inf, -5.0, 0.9)
    assert accept_move(0.0, math.log(0.5), 0.49) and not accept_move(0.0, math.log(0.5), 0.51)


def test_abc_accept():
    stack = GridStack([SupportGrid(0, 1, 10)])
    assert abc_accept([0.55], [0.55], stack)
    assert not abc_accept([0.55], [0.75], stack)
    # same bin, far apart within it: accepted; adjacent bins, very close: rejected
    assert abc_accept([0.501], [0.599], stack)
    assert not abc_accept([0.5999], [0.6001], stack)


def test_fast_kernel_matches_reference():
    rng = np.random.default_rng(1)
    for variant in (ModelVariant.CORRECT, ModelVariant.MISSPECIFIED):
        k = small_kernel(variant)
        B = len(variant.param_names)
        for M in (1, 7, 40):
            th = truth_rows(M, rng)[:, :B]
            assert k.log_likelihood(th) == pytest.approx(k.log_likelihood_reference(th), abs=1e-9)
            assert k.log_prior(th) == pytest.approx(k.log_prior_reference(th), abs=1e-9)


def test_kernel_properties(rng):
    k = small_kernel()
    th = truth_rows(25, rng)
    ll, lp = k.evaluate(th)
    perm = rng.permutation(25)
    assert k.evaluate(th[perm]) == pytest.approx((ll, lp))
    assert ll <= k.I * math.log(k.N) and lp <= k.B * math.log(k.H)
    bad = th.copy()
    bad[3, 0] = 1.5
    assert k.evaluate(bad) == (-math.inf, -math.inf)
    with pytest.raises(InvalidSmoothing):
        k.set_delta(0.0)


def test_kernel_modes_agree_in_limits(rng):
    th = truth_rows(20, rng)
    js, polya = small_kernel(likelihood="js"), small_kernel(likelihood="polya")
    kl = small_kernel(likelihood="kl")
    # the JS form approximates the Polya value up to O(K log N) terms
    assert abs(js.log_likelihood(th) - polya.log_likelihood(th)) < 5 * 2 * js.K * math.log(js.N)
    assert kl.log_likelihood(th) <= js.log_likelihood(th) + 1e-9


def test_rowwise_sweep_matches_python_loop():
    rng = np.random.default_rng(2)
    k = small_kernel()
    moment_row, valid_row, aux = k.row_model
    for M in (1, 7, 40):
        theta = truth_rows(M, rng)
        step = 0.5 * np.array([0.001, 0.03, 0.03, 1e-4, 1e-4])
        noise = rng.standard_normal(theta.shape)
        logu = np.log(rng.random(M))
        fast = theta.copy()
        n_fast = _fastkernel.rowwise_sweep(fast, k.zeta, k.xi, k._m_lower, k._m_inv, k._p_lower, k._p_inv,
                                           float(k.N), float(k.H), k.delta, step, noise, logu,
                                           moment_row, valid_row, aux)
        slow = theta.copy()
        n_slow = 0
        for j in range(M):
            prop = slow.copy()
            prop[j] = slow[j] + step * noise[j]
            new, old = k(prop), k(slow)
            if new > -math.inf and logu[j] <= new - old:
                slow = prop
                n_slow += 1
        assert n_fast == n_slow
        np.testing.assert_allclose(fast, slow, rtol=0, atol=0)


def test_zero_step_always_accepts(rng):
    k = small_kernel()
    ps = ParticleSet.from_particles(truth_rows(5, rng)[None], k)
    out, acc = mutate(ps, k, psi=0.0, omega=np.ones(5), rng=rng)
    assert acc == 1
    assert np.array_equal(out.particles, ps.particles)


class BoxTarget:
    """Flat kernel on the unit square."""

    def evaluate(self, theta):
        inside = np.all((theta >= 0) & (theta <= 1))
        return (0.0, 0.0) if inside else (-math.inf, -math.inf)


def test_flat_box_acceptance_is_stay_in_probability():
    rng = np.random.default_rng(3)
    n = 20000
    start = rng.random((n, 1, 2))
    ps = ParticleSet(start, np.ones(n), np.zeros(n), np.zeros(n))
    step = 0.3
    probe = np.random.default_rng(4)
    out, acc = mutate(ps, BoxTarget(), step, np.ones(2), probe)
    noise = np.random.default_rng(4).standard_normal((n, 1, 2))
    stays = np.all((start + step * noise >= 0) & (start + step * noise <= 1), axis=(1, 2))
    assert acc == stays.sum()


def test_detailed_balance_z_scores_look_standard_normal():
    # one-step flows between cells of a piecewise-constant target started in equilibrium
    rng = np.random.default_rng(11)
    logw = np.log(rng.uniform(0.5, 3.0, size=(4, 4)))

    class Cells:
        def evaluate(self, theta):
            x = theta[0]
            if np.any(x < 0) or np.any(x >= 1):
                return -math.inf, -math.inf
            i, j = np.minimum((x * 4).astype(int), 3)
            return float(logw[i, j]), 0.0

    n = 200000
    p = np.exp(logw).ravel() / np.exp(logw).sum()
    cells = rng.choice(16, size=n, p=p)
    start = np.column_stack([(cells // 4 + rng.random(n)) / 4, (cells % 4 + rng.random(n)) / 4])
    ps = ParticleSet(start[:, None, :], np.ones(n), logw[cells // 4, cells % 4], np.zeros(n))
    out, _ = mutate(ps, Cells(), 1.0, np.array([0.3, 0.3]), rng)
    c = np.minimum((out.particles[:, 0, :] * 4).astype(int), 3)
    F = np.zeros((16, 16))
    np.add.at(F, (cells, c[:, 0] * 4 + c[:, 1]), 1.0 / n)
    iu = np.triu_indices(16, 1)
    a, b = F[iu], F.T[iu]
    live = a + b > 0
    z = (a - b)[live] / np.sqrt((a + b - (a - b) ** 2)[live] / n)
    assert 0.8 < z.std() < 1.2
    assert abs(z.mean()) < 4 / math.sqrt(len(z))


def test_single_particle_run_is_rw_mh():
    k = small_kernel()
    rng_a, rng_b = np.random.default_rng(5), np.random.default_rng(5)
    theta0 = TRUE_CALIBRATION.as_array()[None, :]
    omega = np.array([0.001, 0.03, 0.03, 1e-4, 1e-4])
    a = rw_mh(theta0, k, 400, 100, 0.5, omega, rng_a)
    init = ParticleSet.from_particles(theta0[None], k)
    b = smc_mh_run(init, k, SmcSettings(iterations=400, burn_in=100, psi=0.5, omega=omega), rng_b)
    assert np.array_equal(a.draws, b.draws)
    assert a.draws.shape == (300, 1, 5)
    np.testing.assert_allclose(a.log_kernel, [k(d) for d in a.draws])


def test_multi_particle_run_and_trace():
    rng = np.random.default_rng(6)
    k = small_kernel()
    init = ParticleSet.from_particles(np.stack([truth_rows(3, rng) for _ in range(6)]), k)
    s = SmcSettings(iterations=300, burn_in=100, psi=0.3, omega=np.array([0.001, 0.03, 0.03, 1e-4, 1e-4]),
                    ess_fraction=0.5, resampling="systematic", store_max=120)
    out = smc_mh_run(init, k, s, rng, AdaptSettings(window=50))
    assert out.draws.shape[1:] == (3, 5)
    assert len(out.draws) <= 120 + 6
    assert np.all((out.trace["ess"] >= 1 - 1e-9) & (out.trace["ess"] <= 6 + 1e-9))
    assert set(out.particle) <= set(range(6))
    np.testing.assert_allclose(out.loglik + out.logprior, [k(d) for d in out.draws])


def test_all_dead_particles_raise():
    k = small_kernel()
    bad = np.tile(TRUE_CALIBRATION.as_array(), (2, 1))
    bad[:, 0] = 2.0
    init = ParticleSet.from_particles(bad[None], k)
    with pytest.raises(AllParticlesDead):
        smc_mh_run(init, k, SmcSettings(iterations=5, burn_in=1, psi=0.1, omega=np.ones(5)),
                   np.random.default_rng(0))


def test_adaptation_rules():
    assert _tuned_psi(1.0, 0.1, (0.08, 0.12)) == 1.0
    assert _tuned_psi(1.0, 0.0, (0.08, 0.12)) == 0.5
    assert _tuned_psi(1.0, 0.9, (0.08, 0.12)) == 2.0
    assert _tuned_psi(1.0, 0.15, (0.08, 0.12)) == pytest.approx(1.5)
    a = AdaptSettings(delta_floor=1.0, delta_decay=0.1)
    assert a.decayed(100.0) == pytest.approx(90.0)
    assert a.decayed(1.05) == 1.0
    b = AdaptSettings(delta_decay_mode="subtract", delta_decay=5.0, delta_floor=1.0)
    assert b.decayed(20.0) == 15.0 and b.decayed(3.0) == 1.0


def test_delta_schedule_resets_to_reference():
    rng = np.random.default_rng(7)
    k = small_kernel()
    init = ParticleSet.from_particles(truth_rows(4, rng)[None], k)
    s = SmcSettings(iterations=300, burn_in=200, psi=0.2, omega=np.array([0.001, 0.03, 0.03, 1e-4, 1e-4]))
    adapt = AdaptSettings(delta_schedule=True, delta_start=50.0, delta_decay_every=20, window=20)
    out = smc_mh_run(init, k, s, rng, adapt)
    assert out.trace["delta"][0] == 50.0
    assert np.all(out.trace["delta"][200:] == 1.0)
    assert np.all(np.diff(out.trace["delta"][:200])[out.trace["delta"][1:200] > 1.0] <= 100)
    np.testing.assert_allclose(out.log_kernel, [k(d) for d in out.draws])


def test_frozen_tuning_chain_targets_kernel():
    # without adaptation the stored kernel values are the kernel at the stored draws
    rng = np.random.default_rng(8)
    k = small_kernel()
    out = rw_mh(truth_rows(2, rng), k, 300, 50, 0.3, np.array([0.001, 0.03, 0.03, 1e-4, 1e-4]), rng,
                adapt=AdaptSettings(adapt_psi=False), proposal="rowwise")
    assert out.psi == 0.3
    np.testing.assert_allclose(out.log_kernel, [k(d) for d in out.draws])


def test_select_resets_weights():
    k = small_kernel()
    rng = np.random.default_rng(9)
    ps = ParticleSet.from_particles(np.stack([truth_rows(2, rng) for _ in range(4)]), k)
    ps.weights = np.array([4.0, 0, 0, 0])
    out = select(ps, rng)
    assert np.all(out.weights == 1) and np.all(out.particles == ps.particles[0])
