import numpy as np
import pytest
from hypothesis import given, strategies as st

from dmpi.errors import EmptySample, InvalidGrid, InvalidSmoothing, NonFiniteDraw
from dmpi.histograms import (GridStack, MomentPanel, SupportGrid, bin_index, clamped_count,
                             count_histogram, dirichlet_concentrations, histogram_rows,
                             relative_frequencies)

G = SupportGrid(0.0, 2.0, 4)


@pytest.mark.parametrize("x, k", [(0.0, 0), (2.5, 3), (0.75, 1), (2.0, 3), (-1.0, 0), (0.5, 1)])
def test_bin_index(x, k):
    assert bin_index(x, G) == k


def test_count_histogram_examples():
    assert count_histogram([0.1, 0.1, 1.9], SupportGrid(0, 2, 2)).tolist() == [2, 1]
    assert count_histogram(G.midpoints(), G).tolist() == [1, 1, 1, 1]
    assert count_histogram([-1, 3], G).tolist() == [1, 0, 0, 1]
    assert clamped_count([-1, 3, 1.0], G) == 2


def test_frequencies_and_smoothing():
    np.testing.assert_allclose(relative_frequencies([2, 1]), [2 / 3, 1 / 3])
    np.testing.assert_allclose(relative_frequencies([0, 5]), [0, 1])
    np.testing.assert_allclose(relative_frequencies([1, 1, 1, 1]), 0.25)
    alpha, scale = dirichlet_concentrations([0, 0], 1.0)
    np.testing.assert_allclose(alpha / scale, [0.5, 0.5])
    alpha, scale = dirichlet_concentrations([3, 7], 1.0)
    assert alpha.tolist() == [4, 8] and scale == 12
    alpha, scale = dirichlet_concentrations([5, 0, 0], 0.5)
    np.testing.assert_allclose(alpha / scale, [5.5 / 6.5, 0.5 / 6.5, 0.5 / 6.5])


def test_errors():
    with pytest.raises(InvalidGrid):
        SupportGrid(1.0, 1.0, 4)
    with pytest.raises(InvalidGrid):
        SupportGrid(0.0, 1.0, 1)
    with pytest.raises(NonFiniteDraw):
        bin_index(np.nan, G)
    with pytest.raises(EmptySample):
        count_histogram([], G)
    with pytest.raises(EmptySample):
        relative_frequencies([0, 0])
    with pytest.raises(InvalidSmoothing):
        dirichlet_concentrations([1, 2], 0.0)


@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=200), st.integers(2, 50))
def test_counts_total_and_stack_agree(xs, K):
    g = SupportGrid(-3.0, 4.0, K)
    counts = count_histogram(xs, g)
    assert counts.sum() == len(xs)
    stacked = GridStack([g, SupportGrid(0.0, 1.0, K)]).counts(np.column_stack([xs, xs]))
    assert stacked[0].tolist() == counts.tolist()
    assert stacked[1].tolist() == count_histogram(xs, SupportGrid(0.0, 1.0, K)).tolist()


def test_panel_and_rows():
    stack = GridStack([SupportGrid(0, 1, 4), SupportGrid(0, 2, 4)])
    panel = MomentPanel.from_draws([[0.1, 5.0], [0.1, 0.1]], stack)
    assert panel.size == 2
    assert panel.counts.tolist() == [[2, 0, 0, 0], [1, 0, 0, 1]]
    assert panel.clamped.tolist() == [0, 1]
    rows = histogram_rows(panel.counts, stack.grids, ["a", "b"])
    assert len(rows) == 8
    assert rows[0] == ("a", 0, 0.0, 0.25, 2, 1.0)
    with pytest.raises(EmptySample):
        MomentPanel.from_draws(np.empty((0, 2)), stack)
