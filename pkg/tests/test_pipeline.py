from pathlib import Path

import numpy as np

from dmpi import config as cm
from dmpi.pipeline import initial_psi, parameter_check, replication_streams, run_replication

ROOT = Path(__file__).parent.parent


def tiny():
    cfg = cm.load(ROOT / "configs" / "misspecified_informative.yaml")
    cfg.H, cfg.empirical.N, cfg.empirical.sim_length = 400, 300, 2000
    cfg.sampler.M_values = [1, 3, 6]
    cfg.sampler.iterations, cfg.sampler.burn_in, cfg.sampler.window = 200, 50, 50
    cfg.sampler.pilot_iterations, cfg.sampler.pilot_burn_in = 150, 50
    cfg.replications = 1
    return cfg.validate()


def test_streams_are_distinct_and_reproducible():
    cfg = tiny()
    a, b = replication_streams(cfg, 0), replication_streams(cfg, 0)
    assert a["data"].random() == b["data"].random()
    assert replication_streams(cfg, 1)["data"].random() != replication_streams(cfg, 0)["data"].random()
    assert len(a["sampler"]) == 3


def test_subset_of_m_matches_full_run():
    cfg = tiny()
    full = run_replication(cfg, 0)
    part = run_replication(cfg, 0, M_values=[6])
    np.testing.assert_array_equal(full.results[6].output.draws, part.results[6].output.draws)
    assert full.results[6].log_ml == part.results[6].log_ml
    for res in full.results.values():
        assert np.isfinite(res.log_ml) and res.theory_counts.shape == full.problem.empirical.counts.shape


def test_parameter_box_and_step_scale():
    cfg = tiny()
    valid = parameter_check(cfg.model_variant, cfg.prior_specs(), cfg.param_grids())
    truth = np.array([[cfg.truth[n] for n in cfg.param_names]])
    assert valid.all_valid(truth)
    outside = truth.copy()
    outside[0, 0] = valid.upper[0] + 1e-9
    assert not valid.all_valid(outside)
    assert initial_psi(cfg, 50, 4) == 2.38 / 2.0
    cfg.sampler.proposal = "joint"
    assert initial_psi(cfg, 25, 4) == 2.38 / 10.0
