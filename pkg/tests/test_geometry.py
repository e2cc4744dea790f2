import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ibtopo.errors import GeometryError
from ibtopo.geometry import (Arc, BoundaryPoint, CartesianGrid, Label, Plane, SignedDistanceField,
                             SineHill, classify_points, free_space_sdf, locate_boundary_points,
                             sdf_from_function)


def test_grid_basics():
    g = CartesianGrid((5, 4), (0.5, 2.0), (1.0, -1.0))
    assert g.ndims == 2 and g.size == 20
    np.testing.assert_allclose(g.position((2, 3)), [2.0, 5.0])
    assert g.nodes().shape == (5, 4, 2)
    np.testing.assert_allclose(g.staggered((0.5, 0.0)).origin, [1.25, -1.0])
    assert g.extent() == [(1.0, 3.0), (-1.0, 5.0)]


@pytest.mark.parametrize("shape,spacing", [((3, 5), (1, 1)), ((5, 5), (1, 0)), ((5,) * 4, (1,) * 4)])
def test_grid_validation(shape, spacing):
    with pytest.raises(GeometryError):
        CartesianGrid(shape, spacing)


def test_horizontal_plane_distance():
    g = CartesianGrid((6, 6), (1.0, 1.0))
    sdf = sdf_from_function(g, Plane(3.0))
    assert sdf.values[2, 1] == pytest.approx(2.0)
    assert sdf.values[2, 3] == 0.0
    assert sdf.values[2, 5] == pytest.approx(-2.0)


def test_45_degree_plane_distance():
    g = CartesianGrid((5, 5), (1.0, 1.0), (-2.0, -2.0))
    sdf = sdf_from_function(g, Plane.tilted((0.0, 0.0), 45.0))
    # node (1, 0) lies below-right of y = x
    assert sdf.values[3, 2] == pytest.approx(1 / np.sqrt(2))


def test_side_above_flips_sign():
    g = CartesianGrid((6, 6), (1.0, 1.0))
    below = sdf_from_function(g, Plane(2.5))
    above = sdf_from_function(g, Plane(2.5), side="above")
    np.testing.assert_array_equal(above.values, -below.values)


def test_tilted_plane_gradient_is_unit():
    g = CartesianGrid((30, 30), (0.1, 0.1))
    sdf = sdf_from_function(g, Plane.tilted((1.5, 1.5), 30.0))
    mag = np.sqrt(sum(d ** 2 for d in sdf.gradient()))
    np.testing.assert_allclose(mag[2:-2, 2:-2], 1.0, atol=1e-6)


def test_arc_distance_matches_circle():
    g = CartesianGrid((41, 41), (0.05, 0.05))
    centre = (1.0, 0.2)
    sdf = sdf_from_function(g, Arc(centre, 0.6))
    x = g.nodes()
    r = np.hypot(x[..., 0] - centre[0], x[..., 1] - centre[1])
    # near the cap top the nearest surface point is on the circle
    mask = (np.abs(x[..., 0] - 1.0) < 0.3) & (x[..., 1] > 0.5)
    np.testing.assert_allclose(sdf.values[mask], (0.6 - r)[mask], atol=1e-9)


def test_sine_hill_distance_against_brute_force():
    g = CartesianGrid((21, 21), (0.1, 0.1))
    hill = SineHill(1.0, 0.3, 2.0, (1.0,))
    sdf = sdf_from_function(g, hill)
    xs = np.linspace(-1.0, 3.0, 400001)
    curve = np.column_stack([xs, hill(xs[:, None])])
    for idx in [(3, 4), (10, 12), (15, 2), (0, 20)]:
        p = g.position(idx)
        d = np.sqrt(((curve - p) ** 2).sum(axis=1)).min()
        assert abs(sdf.values[idx]) == pytest.approx(d, abs=1e-7)


def test_boundary_point_axis_aligned():
    g = CartesianGrid((6, 6), (1.0, 1.0))
    sdf = sdf_from_function(g, Plane(2.2))
    bps = {bp.host_index: bp for bp in locate_boundary_points(sdf)}
    bp = bps[(3, 2)]
    np.testing.assert_allclose(bp.position, [3.0, 2.2])
    np.testing.assert_allclose(bp.normal, [0.0, -1.0], atol=1e-12)
    # 0.8 cells away vertically: the foot lies outside the node's cell
    assert (3, 3) not in bps and (3, 1) not in bps


def test_boundary_point_45_degrees():
    g = CartesianGrid((8, 8), (1.0, 1.0))
    plane = Plane.tilted((0.0, 0.3 * np.sqrt(2)), 45.0)
    sdf = sdf_from_function(g, plane)
    bps = {bp.host_index: bp for bp in locate_boundary_points(sdf)}
    bp = bps[(3, 3)]
    assert sdf.values[3, 3] == pytest.approx(0.3)
    n = np.array([1.0, -1.0]) / np.sqrt(2)
    np.testing.assert_allclose(bp.position, np.array([3.0, 3.0]) - 0.3 * n, atol=1e-12)


def test_boundary_points_lie_on_surface():
    g = CartesianGrid((40, 40), (0.05, 0.05))
    sdf = sdf_from_function(g, SineHill(1.0, 0.25, 1.5, (1.0,)))
    bps = locate_boundary_points(sdf)
    assert bps
    s = sdf.interpolate(np.array([bp.position for bp in bps]))
    assert np.abs(s).max() < 0.05 * 0.05
    for bp in bps:
        assert np.linalg.norm(bp.normal) == pytest.approx(1.0, abs=1e-9)
        assert np.all(np.abs(bp.position - g.position(bp.host_index)) <= 0.025 + 1e-15)


def test_degenerate_gradient_recorded():
    g = CartesianGrid((5, 5), (1.0, 1.0))
    values = np.full((5, 5), 0.2)
    diag = []
    assert locate_boundary_points(SignedDistanceField(g, values), diag) == []
    assert len(diag) == 25


def test_free_space_has_no_boundary():
    sdf = free_space_sdf(CartesianGrid((6, 6), (1.0, 1.0)))
    assert locate_boundary_points(sdf) == []


def test_classification_examples():
    g = CartesianGrid((6, 6), (1.0, 1.0))
    sdf = SignedDistanceField(g, np.ones((6, 6)))
    sdf.values[0, 0] = -0.1
    bp = BoundaryPoint((2, 2), np.array([2.3, 2.2]), np.array([0.0, 1.0]))
    c = classify_points(sdf, [bp], 0.5)
    assert c.label((2, 2)) == Label.ETA_EXCLUDED
    assert c.label((0, 0)) == Label.EXTERIOR
    assert c.label((3, 2)) == Label.INTERIOR  # 0.7 cells away in x
    assert not classify_points(sdf, [bp], 0.0).excluded().any()
    with pytest.raises(GeometryError):
        classify_points(sdf, [bp], 1.0)


def test_exterior_matches_sign():
    g = CartesianGrid((20, 20), (0.1, 0.1))
    sdf = sdf_from_function(g, Plane.tilted((1.0, 1.0), 20.0))
    c = classify_points(sdf, locate_boundary_points(sdf), 0.5)
    np.testing.assert_array_equal(c.exterior(), sdf.values < 0)
    assert not np.any(c.excluded() & (sdf.values < 0))


@settings(max_examples=25, deadline=None)
@given(st.floats(-60, 60), st.floats(0.0, 0.95), st.floats(0.0, 0.95))
def test_eta_monotone(angle, e1, e2):
    lo, hi = sorted((e1, e2))
    g = CartesianGrid((16, 16), (0.1, 0.1))
    sdf = sdf_from_function(g, Plane.tilted((0.75, 0.75), angle))
    bps = locate_boundary_points(sdf)
    a = classify_points(sdf, bps, lo).excluded()
    b = classify_points(sdf, bps, hi).excluded()
    assert not np.any(a & ~b)


def test_3d_plane_boundary_points():
    g = CartesianGrid((8, 8, 8), (1.0, 1.0, 1.0))
    sdf = sdf_from_function(g, Plane(3.5, (0.2, -0.1), (3.5, 3.5)))
    bps = locate_boundary_points(sdf)
    assert bps
    normal = -np.array([-0.2, 0.1, 1.0]) / np.linalg.norm([-0.2, 0.1, 1.0])
    for bp in bps:
        np.testing.assert_allclose(bp.normal, normal, atol=1e-9)
