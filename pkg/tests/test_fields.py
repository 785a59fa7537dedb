"""Coefficient field generation: laws, reproducibility, geometry."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from embedhom import EllipticityBounds, rescale
from embedhom.errors import GeometryError, InvalidCoefficientError
from embedhom.fields import (cell_uniform, make_checkerboard, make_constant,
                             make_inclusions, make_laminate,
                             make_one_dim_piecewise)
from embedhom.matrices import is_admissible

B14 = EllipticityBounds(1.0, 4.0)


def test_constant_scalar_becomes_identity_multiple():
    f = make_constant(2.5, B14, dim=2)
    out = f.evaluate(np.zeros((3, 2)))
    assert np.array_equal(out, np.broadcast_to(2.5 * np.eye(2), (3, 2, 2)))


def test_constant_rejects_out_of_bounds():
    with pytest.raises(InvalidCoefficientError):
        make_constant(5.0, B14, dim=2)
    with pytest.raises(InvalidCoefficientError):
        make_constant(np.array([[1.0, 0.9], [0.9, 1.0]]), B14)  # eig 0.1 < 1


def test_evaluate_is_pure_and_order_independent():
    f = make_checkerboard([1.0, 4.0], [0.5, 0.5], 7, B14, dim=2)
    pts = np.random.default_rng(0).uniform(-20, 20, size=(500, 2))
    a = f.evaluate(pts)
    b = f.evaluate(pts[::-1])[::-1]
    assert np.array_equal(a, b)
    assert np.array_equal(a, f.evaluate(pts))


def test_checkerboard_constant_within_cell_and_seed_dependence():
    f7 = make_checkerboard([1.0, 4.0], [0.5, 0.5], 7, B14, dim=2)
    f8 = make_checkerboard([1.0, 4.0], [0.5, 0.5], 8, B14, dim=2)
    base = np.array([3.0, -2.0])
    inside = base + np.random.default_rng(1).uniform(0.01, 0.99, size=(50, 2))
    vals = f7.evaluate(inside)
    assert np.array_equal(vals, np.broadcast_to(vals[0], vals.shape))
    # a different seed redraws essentially every cell somewhere
    cells = np.random.default_rng(2).integers(-50, 50, size=(400, 2)) + 0.5
    assert not np.array_equal(f7.evaluate(cells), f8.evaluate(cells))


def test_checkerboard_law_matches_probabilities_3sigma():
    probs = [0.2, 0.5, 0.3]
    f = make_checkerboard([1.0, 2.0, 4.0], probs, seed=123, bounds=B14, dim=2)
    n_side = 60
    ii, jj = np.meshgrid(np.arange(n_side), np.arange(n_side), indexing="ij")
    pts = np.stack([ii.ravel() + 0.5, jj.ravel() + 0.5], axis=1)
    vals = f.evaluate(pts)[:, 0, 0]
    n = n_side * n_side
    for v, p in zip([1.0, 2.0, 4.0], probs):
        count = int(np.sum(vals == v))
        sigma = np.sqrt(n * p * (1 - p))
        assert abs(count - n * p) <= 3 * sigma, (v, count, n * p)


def test_checkerboard_stationary_under_cell_shift():
    # one-point marginal over a shifted block still matches the law
    f = make_checkerboard([1.0, 4.0], [0.25, 0.75], seed=5, bounds=B14, dim=2)
    n_side, shift = 50, np.array([173, -41])
    ii, jj = np.meshgrid(np.arange(n_side), np.arange(n_side), indexing="ij")
    pts = np.stack([ii.ravel(), jj.ravel()], axis=1) + shift + 0.5
    vals = f.evaluate(pts)[:, 0, 0]
    n = n_side * n_side
    count = int(np.sum(vals == 4.0))
    sigma = np.sqrt(n * 0.75 * 0.25)
    assert abs(count - 0.75 * n) <= 3 * sigma


def test_matrix_valued_checkerboard_admissible_everywhere():
    m1 = np.array([[2.0, 0.5], [0.5, 1.5]])
    m2 = np.diag([1.0, 4.0])
    f = make_checkerboard([m1, m2], [0.5, 0.5], seed=3, bounds=B14, dim=2)
    pts = np.random.default_rng(3).uniform(-10, 10, size=(300, 2))
    for mat in f.evaluate(pts):
        assert is_admissible(mat, B14)


def test_inclusions_geometry_stays_inside_cells():
    f = make_inclusions(4.0, [1.0], [1.0], r_min=0.2, r_max=0.45, seed=9,
                        bounds=B14, dim=2)
    cells = np.random.default_rng(0).integers(-30, 30, size=(200, 2))
    centers, radii = f.cell_geometry(cells)
    assert np.all(radii >= 0.2) and np.all(radii <= 0.45)
    # ball strictly inside its cell: no overlap between neighbors, ever
    assert np.all(centers - radii[:, None] >= cells - 1e-12)
    assert np.all(centers + radii[:, None] <= cells + 1.0 + 1e-12)


def test_inclusions_membership_interior_vs_matrix():
    f = make_inclusions(4.0, [1.0], [1.0], r_min=0.3, r_max=0.3, seed=2,
                        bounds=B14, dim=2, jitter=False)
    # without jitter the ball sits at the cell center
    assert f(np.array([10.5, 3.5]))[0, 0] == 1.0       # center of cell (10,3)
    assert f(np.array([10.99, 3.99]))[0, 0] == 4.0     # corner is outside r=0.3


def test_inclusions_radius_cap():
    with pytest.raises(GeometryError):
        make_inclusions(4.0, [1.0], [1.0], r_min=0.2, r_max=0.5, seed=0,
                        bounds=B14, dim=2)


def test_laminate_values_and_period():
    f = make_laminate(1.0, 4.0, axis=0, period=1.0, bounds=B14, dim=2)
    assert f(np.array([0.1, 0.7]))[0, 0] == 1.0
    assert f(np.array([0.6, 0.7]))[0, 0] == 4.0
    assert f(np.array([1.1, 0.0]))[0, 0] == 1.0        # period 1 repeats
    g = make_laminate(1.0, 4.0, axis=1, period=2.0, bounds=B14, dim=2)
    assert g(np.array([0.0, 0.5]))[1, 1] == 1.0
    assert g(np.array([0.0, 1.5]))[1, 1] == 4.0


def test_one_dim_piecewise_lookup_and_validation():
    f = make_one_dim_piecewise([-0.5, 0.25], [1.0, 2.0, 4.0], B14)
    xs = np.array([[-0.9], [-0.5], [0.0], [0.25], [0.9]])
    got = f.evaluate(xs)[:, 0, 0]
    assert list(got) == [1.0, 2.0, 2.0, 4.0, 4.0]      # right-closed pieces
    with pytest.raises(GeometryError):
        make_one_dim_piecewise([0.3, 0.1], [1, 2, 3], B14)   # not increasing
    with pytest.raises(GeometryError):
        make_one_dim_piecewise([0.0], [1.0], B14)            # wrong count


def test_rescale_is_composition_with_dilation():
    f = make_checkerboard([1.0, 4.0], [0.5, 0.5], 7, B14, dim=2)
    g = rescale(f, 4.0)
    pts = np.random.default_rng(5).uniform(-3, 3, size=(200, 2))
    assert np.array_equal(g.evaluate(pts), f.evaluate(4.0 * pts))
    gg = rescale(g, 2.0)   # factors multiply through
    assert np.array_equal(gg.evaluate(pts), f.evaluate(8.0 * pts))


def test_rescale_shrinks_1d_breakpoints():
    f = make_one_dim_piecewise([-0.5, 0.25], [1.0, 2.0, 4.0], B14)
    g = rescale(f, 2.0)
    np.testing.assert_allclose(g.breakpoints_1d(-1.0, 1.0), [-0.25, 0.125])


def test_describe_round_trips_parameters():
    f = make_inclusions(4.0, [1.0, 2.0], [0.5, 0.5], 0.1, 0.3, 42, B14, dim=2)
    d = f.describe()
    assert d["kind"] == "inclusions" and d["seed"] == 42
    assert d["r_min"] == 0.1 and d["bounds"] == [1.0, 4.0]


@given(seed=st.integers(0, 2**32), stream=st.integers(0, 100),
       cx=st.integers(-10**6, 10**6), cy=st.integers(-10**6, 10**6))
@settings(max_examples=200, deadline=None)
def test_cell_uniform_in_open_unit_interval(seed, stream, cx, cy):
    u = cell_uniform(seed, np.array([[cx, cy]]), stream)
    assert 0.0 < u[0] < 1.0


@given(st.integers(0, 2**20))
@settings(max_examples=50, deadline=None)
def test_cell_uniform_streams_are_distinct(seed):
    cells = np.arange(20, dtype=np.int64).reshape(-1, 2)
    a = cell_uniform(seed, cells, stream=11)
    b = cell_uniform(seed, cells, stream=23)
    assert not np.array_equal(a, b)


def test_cell_uniform_vectorization_matches_single_calls():
    cells = np.array([[0, 0], [5, -3], [-7, 11]], dtype=np.int64)
    batch = cell_uniform(99, cells, stream=1)
    singles = [cell_uniform(99, c.reshape(1, 2), stream=1)[0] for c in cells]
    assert list(batch) == singles
