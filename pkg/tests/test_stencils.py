from fractions import Fraction

import numpy as np
import pytest

from ibtopo.basis import BCKind, DerivativeVectorLayout, bc_family
from ibtopo.errors import UnconstrainableRegion
from ibtopo.geometry import (Arc, BoundaryPoint, CartesianGrid, Label, Plane, PointClassification,
                             classify_points, free_space_sdf, locate_boundary_points,
                             sdf_from_function)
from ibtopo.solver import build_domain
from ibtopo.stencils import (DerivativeSpec, FieldGeometry, OperatorBuilder, assemble_system,
                             build_support, constrain, coupled_fields, extrapolation_operator,
                             field_blocks, generate_operator_table, interior_stencil,
                             modify_stencil, stencil_sum, table_to_sparse)

from polyoracle import Polynomial, forced


def rational_weights(points, order):
    """Finite-difference weights by exact Gaussian elimination of the moment system."""
    n = len(points)
    pts = [Fraction(p) for p in points]
    a = [[p ** k for p in pts] + [Fraction(int(k == order) * _fact(order))] for k in range(n)]
    for c in range(n):
        piv = next(r for r in range(c, n) if a[r][c] != 0)
        a[c], a[piv] = a[piv], a[c]
        a[c] = [v / a[c][c] for v in a[c]]
        for r in range(n):
            if r != c:
                a[r] = [x - a[r][c] * y for x, y in zip(a[r], a[c])]
    return [float(r[-1]) for r in a]


def _fact(k):
    out = 1
    for i in range(2, k + 1):
        out *= i
    return out


def weights(st):
    return [t.weight for t in sorted(st.taps, key=lambda t: t.offset)]


def offsets(st):
    return [t.offset[0] for t in sorted(st.taps, key=lambda t: t.offset)]


def free_field(shape, spacing=None, name="p"):
    g = CartesianGrid(shape, spacing or (1.0,) * len(shape))
    return FieldGeometry(name, g, PointClassification(g, np.zeros(shape, dtype=np.int8)))


# --------------------------------------------------------------------------
# interior stencils

def test_second_order_classic_weights():
    d1 = interior_stencil(DerivativeSpec.along("p", 0, 1, 1), 2, (1.0,))
    d2 = interior_stencil(DerivativeSpec.along("p", 0, 2, 1), 2, (1.0,))
    np.testing.assert_allclose(weights(d1), [-0.5, 0.0, 0.5], atol=1e-15)
    np.testing.assert_allclose(weights(d2), [1.0, -2.0, 1.0], atol=1e-15)
    assert offsets(d2) == [-1, 0, 1]


def test_fourth_order_second_derivative():
    st = interior_stencil(DerivativeSpec.along("p", 0, 2, 1), 4, (1.0,))
    np.testing.assert_allclose(weights(st), [-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12], atol=1e-12)


@pytest.mark.parametrize("m", [2, 4, 6, 8])
@pytest.mark.parametrize("order", [1, 2])
def test_centred_weights_match_rational_oracle(m, order):
    st = interior_stencil(DerivativeSpec.along("p", 0, order, 1), m, (1.0,))
    np.testing.assert_allclose(weights(st), rational_weights(range(-m // 2, m // 2 + 1), order),
                               atol=1e-12)


@pytest.mark.parametrize("m", [2, 4, 6])
@pytest.mark.parametrize("stagger", [0.5, -0.5])
def test_staggered_weights(m, stagger):
    st = interior_stencil(DerivativeSpec.along("v", 0, 1, 1, stagger), m, (1.0,))
    half = [Fraction(2 * k - m + 1, 2) for k in range(m)]
    np.testing.assert_allclose(weights(st), rational_weights(half, 1), atol=1e-12)
    # the evaluation point sits at node + stagger, so offsets are shifted half-points
    assert offsets(st) == [int(h + Fraction(stagger).limit_denominator()) for h in half]


def test_staggered_fourth_order_values():
    st = interior_stencil(DerivativeSpec.along("v", 0, 1, 1, 0.5), 4, (1.0,))
    np.testing.assert_allclose(weights(st), [1 / 24, -9 / 8, 9 / 8, -1 / 24], atol=1e-14)
    assert offsets(st) == [-1, 0, 1, 2]


def test_weights_scale_with_spacing():
    st = interior_stencil(DerivativeSpec.along("p", 1, 2, 2), 4, (1.0, 0.1))
    assert stencil_sum(st) == pytest.approx(16 / 3 * 100)
    assert all(t.offset[0] == 0 for t in st.taps)


# --------------------------------------------------------------------------
# supports and systems

@pytest.mark.parametrize("radius,count", [(1.5, 9), (2.5, 21), (3.5, 37)])
def test_support_lattice_counts(radius, count):
    fg = free_field((15, 15))
    sup = build_support(fg.grid.position((7, 7)), [fg], radius, [])
    assert len(sup.interior_points) == count
    assert sup.boundary_points == []


def test_support_skips_non_interior_nodes():
    fg = free_field((15, 15))
    fg.classification.labels[:, 8:] = Label.EXTERIOR
    fg.classification.labels[:, 7] = Label.ETA_EXCLUDED
    sup = build_support(fg.grid.position((7, 7)), [fg], 2.5, [])
    # rows j=6 and j=5 keep 5 and 3 nodes
    assert len(sup.interior_points) == 8
    assert all(idx[1] < 7 for _, idx in sup.interior_points)


def test_one_dimensional_worked_system():
    fg = free_field((6,))
    fg.classification.labels[3:] = Label.EXTERIOR
    xb = 2.4
    bp = BoundaryPoint((2,), np.array([xb]), np.array([-1.0]))
    bcs = bc_family(BCKind.FREE_PRESSURE, 2, 1)
    layout = DerivativeVectorLayout.uniform(["p"], 1, 2)
    x0 = np.array([2.0])
    sup = build_support(x0, [fg], 1.5, [bp])
    a, values, forcing = assemble_system(sup, layout, bcs, x0, (1.0,))
    assert values == [("p", (1,)), ("p", (2,))]
    d = xb - 2.0
    np.testing.assert_allclose(a, [[1, -1, 0.5], [1, 0, 0], [1, d, d * d / 2], [0, 0, 1]])
    np.testing.assert_array_equal(forcing, [0.0, 0.0])

    # extrapolate to x3, x4 and substitute into the 3-point second derivative at x2
    ext = constrain(x0, [fg], [bp], bcs, 2, radius=1.5)
    op = extrapolation_operator(ext, "p", [(3,)], fg.grid)
    base = interior_stencil(DerivativeSpec.along("p", 0, 2, 1), 2, (1.0,))
    st = modify_stencil(base, op, ext, index=(2,))
    # independent oracle: least squares by normal equations, composed by hand
    coef = np.linalg.solve(a.T @ a, a.T)
    proj = np.array([1.0, 1.0, 0.5]) @ coef  # value at x3 from (f1, f2, 0, 0)
    expected = {(-1,): 1.0 + proj[0], (0,): -2.0 + proj[1]}
    got = {t.offset: t.weight for t in st.taps}
    assert got.keys() == expected.keys()
    for k in expected:
        assert got[k] == pytest.approx(expected[k], abs=1e-12)
    assert st.forcing == 0.0


def test_projection_reproduces_quartics():
    fg = free_field((9, 9))
    ext = constrain(fg.grid.position((4, 4)), [fg], [], [], 4)
    targets = [(4, 4), (7, 6), (9, 4)]  # the last lies outside the array
    op = extrapolation_operator(ext, "p", targets, fg.grid)
    poly = Polynomial.random(np.random.default_rng(3), 2, 4, (4.0, 4.0), 2.0)
    known = np.array([poly(np.array(fg.grid.position(idx))) for _, idx in ext.values])
    for row, idx in zip(op.weights, targets):
        want = poly(np.array(fg.grid.position(idx)))
        assert row @ known == pytest.approx(want, rel=1e-10, abs=1e-10)


def test_free_space_constrain_needs_no_growth():
    fg = free_field((15, 15))
    ext = constrain(fg.grid.position((7, 7)), [fg], [], [], 4)
    assert ext.rank == 15 and ext.expansions == 0 and ext.support.radius == 2.5


def test_unconstrainable_region():
    fg = free_field((9, 9))
    fg.classification.labels[:] = Label.EXTERIOR
    fg.classification.labels[4, 4] = Label.INTERIOR
    with pytest.raises(UnconstrainableRegion) as info:
        constrain(fg.grid.position((4, 4)), [fg], [], [], 4, index=(4, 4))
    assert info.value.index == (4, 4)


def test_order_reduction_when_radius_capped():
    fg = free_field((15, 15))
    fg.classification.labels[:, 9:] = Label.EXTERIOR
    fg.classification.labels[:, :7] = Label.EXTERIOR
    # two usable rows cannot constrain quartic terms in y; quadratics neither
    with pytest.raises(UnconstrainableRegion):
        constrain(fg.grid.position((7, 7)), [fg], [], [], 4, max_radius=4.0)
    fg.classification.labels[:, 6] = Label.INTERIOR
    ext = constrain(fg.grid.position((7, 7)), [fg], [], [], 4, max_radius=4.0)
    assert ext.order == 2


# --------------------------------------------------------------------------
# block structure

def _velocity_setup(with_divergence):
    g = CartesianGrid((20, 20), (1.0, 1.0))
    dom = build_domain(g, lambda gg: sdf_from_function(gg, Arc((9.5, 2.0), 8.0)), "acoustic1", 0.5, 0.0)
    bcs = bc_family(BCKind.FREE_PRESSURE, 2, 2)
    if with_divergence:
        bcs += bc_family(BCKind.FREE_VELOCITY, 2, 2)
    layout = DerivativeVectorLayout.uniform(["p", "vx", "vy"], 2, 2)
    bp = dom.boundary_points[len(dom.boundary_points) // 2]
    x0 = bp.position + np.array([0.0, -1.0])
    sup = build_support(x0, list(dom.fields.values()), 3.5, dom.boundary_points)
    assert sup.boundary_points
    a, _, _ = assemble_system(sup, layout, bcs, x0, g.spacing)
    return a, layout, bcs


def test_blocks_separable_without_divergence():
    a, layout, bcs = _velocity_setup(False)
    assert sorted(field_blocks(a, layout)) == [("p",), ("vx",), ("vy",)]
    assert coupled_fields(bcs, ["p", "vx", "vy"]) == {"p": ("p",), "vx": ("vx",), "vy": ("vy",)}


def test_divergence_merges_velocity_blocks():
    a, layout, bcs = _velocity_setup(True)
    assert sorted(field_blocks(a, layout)) == [("p",), ("vx", "vy")]
    assert coupled_fields(bcs, ["p", "vx", "vy"])["vx"] == ("vx", "vy")


# --------------------------------------------------------------------------
# tables

def _plane_domain(height, n=16, eta=0.5):
    g = CartesianGrid((n, n), (1.0, 1.0))
    return build_domain(g, lambda gg: sdf_from_function(gg, Plane(height)), "acoustic2", eta)


def _table(dom, spec, m=4, **kw):
    builder = OperatorBuilder(list(dom.fields.values()), dom.boundary_points,
                              bc_family(BCKind.FREE_PRESSURE, m, dom.ndims), m)
    fg = dom.fields[spec.field]
    return generate_operator_table(spec, fg.grid, builder, fg.classification, **kw)


def test_far_boundary_gives_only_interior_stencils():
    dom = _plane_domain(40.0)
    spec = DerivativeSpec.along("p", 1, 2, 2)
    table = _table(dom, spec)
    base = interior_stencil(spec, 4, (1.0, 1.0))
    assert table and not any(st.modified for st in table.values())
    assert all(st.taps == base.taps for st in table.values())
    # footprint leaving the array: no entry
    assert (5, 0) not in table and (5, 2) in table


def test_grid_aligned_boundary_modifies_m_half_rows():
    dom = _plane_domain(10.0, eta=0.0)
    table = _table(dom, DerivativeSpec.along("p", 1, 2, 2))
    mod_rows = sorted({j for (i, j), st in table.items() if st.modified})
    assert mod_rows == [9, 10]
    assert all(not st.modified for (i, j), st in table.items() if j < 9)


def test_exterior_nodes_have_no_stencil():
    dom = _plane_domain(10.3)
    table = _table(dom, DerivativeSpec.along("p", 0, 2, 2))
    assert all(j <= 10 for (_, j) in table)


def test_arc_modified_stencil_spans_support():
    g = CartesianGrid((21, 21), (1.0, 1.0))
    dom = build_domain(g, lambda gg: sdf_from_function(gg, Arc((10.0, 6.6 - 6.0), 6.0)), "acoustic2", 0.5)
    spec = DerivativeSpec.along("p", 1, 2, 2)
    table = _table(dom, spec, nodes=[(10, 5)])
    st = table[(10, 5)]
    assert st.modified and len(st.taps) > 5
    assert st.info.rank == 15 and st.info.radius >= 2.5
    labels = dom.fields["p"].classification.labels
    assert all(labels[10 + t.offset[0], 5 + t.offset[1]] == Label.INTERIOR for t in st.taps)


def test_block_independence():
    g = CartesianGrid((16, 16), (1.0, 1.0))
    dom = build_domain(g, lambda gg: sdf_from_function(gg, Plane.tilted((7.5, 9.3), 20.0)), "acoustic1")
    bcs = bc_family(BCKind.FREE_PRESSURE, 4, 2)
    builder = OperatorBuilder(list(dom.fields.values()), dom.boundary_points, bcs, 4)
    p_tab = generate_operator_table(DerivativeSpec.along("p", 0, 1, 2, 0.5), dom.fields["vx"].grid,
                                    builder, dom.fields["vx"].classification)
    assert any(st.modified for st in p_tab.values())
    assert all(t.field == "p" for st in p_tab.values() for t in st.taps)


def test_velocity_pair_extrapolants_are_full_rank():
    g = CartesianGrid((24, 24), (1.0, 1.0))
    dom = build_domain(g, lambda gg: sdf_from_function(gg, Arc((11.5, 4.0), 9.0)), "acoustic1", 0.5, 0.0)
    bcs = bc_family(BCKind.FREE_VELOCITY, 2, 2)
    builder = OperatorBuilder([dom.fields["vx"], dom.fields["vy"]], dom.boundary_points, bcs, 2)
    table = generate_operator_table(DerivativeSpec.along("vx", 0, 1, 2, -0.5), g, builder,
                                    dom.fields["p"].classification)
    mods = [st for st in table.values() if st.modified]
    assert mods
    assert all(st.info.rank == 12 and st.info.fields == ("vx", "vy") for st in mods)
    assert any(st.info.expansions >= 1 for st in mods)
    assert {t.field for st in mods for t in st.taps} == {"vx", "vy"}


def test_polynomial_reproduction_with_forcing():
    g = CartesianGrid((18, 18), (0.5, 0.5))
    surface = Plane.tilted((4.0, 5.2), 25.0)
    dom = build_domain(g, lambda gg: sdf_from_function(gg, surface), "acoustic2", 0.5)
    rng = np.random.default_rng(7)
    poly = Polynomial.random(rng, 2, 4, (4.0, 4.0), 3.0)
    bcs = [forced(bc, {"p": poly}) for bc in bc_family(BCKind.FREE_PRESSURE, 4, 2)]
    builder = OperatorBuilder([dom.fields["p"]], dom.boundary_points, bcs, 4)
    vals = {"p": poly(g.nodes())}
    for axis in (0, 1):
        spec = DerivativeSpec.along("p", axis, 2, 2)
        for idx, st in builder.table(spec, g, dom.fields["p"].classification).items():
            want = float(poly.derivative(g.position(idx), spec.derivative))
            assert st.apply(vals) == pytest.approx(want, rel=1e-8, abs=1e-8)


def test_tables_are_deterministic():
    dom = _plane_domain(9.37)
    spec = DerivativeSpec.along("p", 1, 2, 2)
    a = _table(dom, spec)
    b = _table(dom, spec)
    assert a.keys() == b.keys()
    for k in a:
        assert a[k].taps == b[k].taps and a[k].forcing == b[k].forcing


def test_table_to_sparse_matches_apply():
    dom = _plane_domain(9.37)
    spec = DerivativeSpec.along("p", 1, 2, 2)
    table = _table(dom, spec)
    g = dom.grid
    mat, forcing = table_to_sparse(table, g.shape, {"p": 0}, {"p": g.shape}, g.size)
    rng = np.random.default_rng(1)
    f = rng.standard_normal(g.shape)
    out = (mat @ f.ravel() + forcing).reshape(g.shape)
    for idx, st in table.items():
        assert out[idx] == pytest.approx(st.apply({"p": f}), abs=1e-12)


def test_free_space_machinery_in_3d():
    g = CartesianGrid((8, 8, 8), (1.0, 0.5, 2.0))
    sdf = free_space_sdf(g)
    fg = FieldGeometry("p", g, classify_points(sdf, locate_boundary_points(sdf), 0.5))
    builder = OperatorBuilder([fg], [], bc_family(BCKind.FREE_PRESSURE, 4, 3), 4)
    for axis in range(3):
        spec = DerivativeSpec.along("p", axis, 2, 3)
        base = interior_stencil(spec, 4, g.spacing)
        table = generate_operator_table(spec, g, builder, fg.classification)
        assert len(table) == 4 * 8 * 8
        assert all(st.taps == base.taps and not st.modified for st in table.values())
