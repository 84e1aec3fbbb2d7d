"""Mask generators, their analytic coverage functions, and diagnostics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fmest.data import DataFormatError, Grid
from fmest.sampling import (
    MissingScheme,
    analytic_b,
    bernoulli_sparse,
    complete,
    empirical_b,
    fixed_intervals,
    generate_masks,
    parse_scheme,
    random_interval,
    snippet,
    sup_deviation,
)

GRID = Grid.uniform(100)


def test_scheme_validation():
    with pytest.raises(DataFormatError):
        MissingScheme("bogus")
    with pytest.raises(DataFormatError):
        random_interval(-0.1, 0.3)
    with pytest.raises(DataFormatError):
        fixed_intervals([])
    with pytest.raises(DataFormatError):
        fixed_intervals([0.7, 0.3])
    with pytest.raises(DataFormatError):
        snippet(1.5)
    with pytest.raises(DataFormatError):
        bernoulli_sparse(0.0)
    with pytest.raises(DataFormatError):
        random_interval(epsilon_trim=0.5)


def test_parse_scheme_round_trip():
    for text in ["complete", "random-interval:0.3,0.3", "fixed-intervals:0.33,0.67",
                 "snippet:0.2", "sparse:0.1"]:
        assert parse_scheme(text).describe() == text
    with pytest.raises(DataFormatError):
        parse_scheme("random-interval:0.3")
    with pytest.raises(DataFormatError):
        parse_scheme("martian")


def test_complete_masks_all_ones():
    m = generate_masks(complete(), 7, GRID, 1)
    assert m.shape == (7, 100)
    assert m.all()


def test_every_mask_has_an_observation():
    for scheme in (random_interval(), fixed_intervals([0.5]), snippet(0.2),
                   bernoulli_sparse(0.1)):
        m = generate_masks(scheme, 50, GRID, 42)
        assert m.any(axis=1).all(), scheme.describe()


def test_masks_deterministic_and_per_curve():
    """Curve i's mask depends only on (seed, i), so prefixes agree."""
    a = generate_masks(random_interval(), 10, GRID, 9)
    b = generate_masks(random_interval(), 25, GRID, 9)
    np.testing.assert_array_equal(a, b[:10])
    c = generate_masks(random_interval(), 10, GRID, 10)
    assert not np.array_equal(a, c)


def test_random_interval_is_contiguous():
    m = generate_masks(random_interval(), 200, GRID, 3)
    for row in m:
        on = np.flatnonzero(row)
        assert np.array_equal(on, np.arange(on[0], on[-1] + 1))


def test_random_interval_trim_restricts_support():
    eps = 0.05
    m = generate_masks(random_interval(epsilon_trim=eps), 300, GRID, 4)
    cols = np.flatnonzero(m.any(axis=0))
    assert GRID.points[cols[0]] >= eps - 1e-12
    assert GRID.points[cols[-1]] <= 1 - eps + 1e-12


def test_fixed_intervals_partition():
    scheme = fixed_intervals([1 / 3, 2 / 3])
    m = generate_masks(scheme, 120, GRID, 5)
    edges = (0.0, 1 / 3, 2 / 3, 1.0)
    for row in m:
        on = GRID.points[row]
        # the whole observed stretch sits inside exactly one piece
        piece = [j for j in range(3)
                 if on[0] >= edges[j] - 1e-12 and on[-1] <= edges[j + 1] + 1e-12]
        assert piece, "mask crosses a breakpoint"
    # half-open pieces: a grid point exactly on an interior breakpoint
    # belongs to the right piece, so the left piece never contains it
    grid4 = Grid.uniform(7)  # contains t = 0.5 exactly
    m4 = generate_masks(fixed_intervals([0.5]), 300, grid4, 6)
    left = m4[m4[:, 0]]  # draws of the first piece
    assert left.size and not left[:, 3].any()


def test_snippet_width_inclusive():
    d = 0.2
    m = generate_masks(snippet(d), 300, GRID, 7)
    lengths = m.sum(axis=1)
    # a closed window of width d on spacing h covers floor(d/h) or
    # floor(d/h)+1 grid points depending on its phase
    h = GRID.points[1] - GRID.points[0]
    assert lengths.min() >= int(d / h)
    assert lengths.max() <= int(d / h) + 1


def test_sparse_respects_envelope():
    m = generate_masks(bernoulli_sparse(0.5, beta_a=5, beta_b=5), 100, GRID, 8)
    for row in m:
        on = np.flatnonzero(row)
        assert on.size >= 1


def test_empirical_b_and_sup_deviation():
    m = np.array([[True, False], [True, True]])
    g = Grid.uniform(2)
    np.testing.assert_allclose(empirical_b(m, g), [1.0, 0.5])
    assert sup_deviation(m, np.array([1.0, 1.0])) == 0.5
    with pytest.raises(DataFormatError):
        empirical_b(m, GRID)


@pytest.mark.parametrize("scheme", [
    random_interval(),
    random_interval(2.0, 5.0),
    fixed_intervals([0.33, 0.67]),
    snippet(0.2),
    bernoulli_sparse(0.3),
], ids=lambda s: s.describe())
def test_analytic_b_matches_large_sample(scheme):
    """b_hat at n = 20000 sits within 0.02 of the closed form everywhere."""
    masks = generate_masks(scheme, 20_000, GRID, 123)
    b = analytic_b(scheme, GRID)
    assert sup_deviation(masks, b) < 0.02


def test_analytic_b_complete():
    np.testing.assert_array_equal(analytic_b(complete(), GRID), np.ones(100))


def test_analytic_b_fixed_intervals_uniform_choice():
    b = analytic_b(fixed_intervals([0.5]), GRID)
    np.testing.assert_allclose(b, 0.5)


def test_analytic_b_conditions_on_nonempty_draws():
    """With a coarse grid and a tight scheme, empty draws are common; the
    analytic curve must describe the redrawn (conditional) distribution."""
    coarse = Grid.from_unit_points([0.0, 0.45, 0.55, 1.0])
    scheme = random_interval(0.3, 0.3)
    masks, redraws = generate_masks(scheme, 30_000, coarse, 77, return_redraws=True)
    assert redraws > 1000  # the conditioning actually matters here
    b = analytic_b(scheme, coarse)
    assert sup_deviation(masks, b) < 0.02


def test_root_n_rate_of_sup_deviation():
    """median(sqrt(n) * W_n) stays within a factor 2 across n = 50..800."""
    scheme = random_interval()
    b = analytic_b(scheme, GRID)
    meds = []
    for n in (50, 200, 800):
        stats = [np.sqrt(n) * sup_deviation(generate_masks(scheme, n, GRID, (1000, n, r)), b)
                 for r in range(60)]
        meds.append(np.median(stats))
    assert max(meds) / min(meds) < 2.0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 40))
def test_masks_shape_and_dtype(seed, n):
    m = generate_masks(random_interval(), n, GRID, seed)
    assert m.shape == (n, GRID.size)
    assert m.dtype == bool
    assert m.any(axis=1).all()
