import numpy as np
import pytest

from dmpi.histograms import GridStack, MomentPanel, SupportGrid
from dmpi.nkpc import MOMENT_NAMES, ModelVariant, MomentMap, TRUE_CALIBRATION, ValidityCheck, population_moments
from dmpi.priors import PriorSpec, build_reference_sample, default_grid
from dmpi.sampler import PosteriorKernel

# filled by tests/test_acceptance.py, printed once at the end of the run
CRITERIA = {}

MOMENT_SUPPORTS = {
    "a12": (0.0, 0.5), "a22": (0.0, 1.5), "sigma11_sq": (0.0, 3e-7),
    "sigma12": (0.0, 6e-7), "sigma22_sq": (0.0, 2.5e-6),
}

INFORMATIVE = [
    PriorSpec("Beta", 0.98, 0.001),
    PriorSpec("Beta", 0.8, 0.0316),
    PriorSpec("Beta", 0.8, 0.0316),
    PriorSpec("TruncatedNormal", 0.001, 0.0001),
    PriorSpec("TruncatedNormal", 0.00025, 0.0001),
]


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        ok, detail = CRITERIA[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


def moment_stack(K=100):
    return GridStack([SupportGrid(*MOMENT_SUPPORTS[m], K) for m in MOMENT_NAMES])


def small_kernel(variant=ModelVariant.CORRECT, K=40, N=400, H=2000, seed=0, likelihood="js", delta=1.0):
    """NKPC kernel with an empirical panel scattered around the true moments."""
    rng = np.random.default_rng(seed)
    B = len(ModelVariant(variant).param_names)
    specs = INFORMATIVE[:B]
    truth = population_moments(TRUE_CALIBRATION, ModelVariant.CORRECT)
    emp = truth * (1 + 0.1 * rng.standard_normal((N, len(truth))))
    panel = MomentPanel.from_draws(emp, moment_stack(K))
    grids = [default_grid(s, K) for s in specs]
    ref = build_reference_sample(specs, H, grids, rng)
    lower = [g.lower for g in grids]
    upper = [g.upper for g in grids]
    return PosteriorKernel(panel, ref, MomentMap(variant), ValidityCheck(variant, lower, upper),
                           delta=delta, likelihood=likelihood)


@pytest.fixture
def kernel():
    return small_kernel()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
