"""Boundary-constrained extrapolation baked into modified FD stencils.

For an evaluation point ``x0`` whose interior stencil reaches exterior (or
eta-excluded) nodes, a truncated Taylor basis centred on ``x0`` is fitted to
the interior nodes of a circular support region plus the boundary
conditions at the boundary points it contains.  The fitted basis is
projected onto the missing nodes and substituted into the interior stencil,
so the result is a stencil over interior nodes only (possibly spanning
several fields) plus a constant from the boundary forcing.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .basis import (BoundaryConditionSpec, DerivativeVectorLayout, MultiIndex, bc_row,
                    taylor_rows)
from .errors import ConfigError, InternalError, UnconstrainableRegion
from .geometry import BoundaryPoint, CartesianGrid, Label, PointClassification
from .linalg import pinv_with_rank

log = logging.getLogger(__name__)

RADIUS_STEP = 0.5
_TIE = 1e-9  # lattice points exactly on the support sphere count as inside


@dataclass(frozen=True)
class DerivativeSpec:
    """Derivative of ``field`` evaluated at a point offset from its nodes.

    ``stagger[n]`` is the evaluation point minus the field node, in cells;
    0 for collocated and +/-0.5 for staggered derivatives.
    """

    field: str
    derivative: MultiIndex
    stagger: tuple[float, ...]

    @classmethod
    def along(cls, field: str, axis: int, order: int, ndims: int, stagger: float = 0.0):
        deriv = tuple(order if a == axis else 0 for a in range(ndims))
        stag = tuple(stagger if a == axis else 0.0 for a in range(ndims))
        return cls(field, deriv, stag)

    @property
    def ndims(self) -> int:
        return len(self.derivative)

    @property
    def axis(self) -> int:
        nz = [a for a, d in enumerate(self.derivative) if d]
        if len(nz) != 1:
            raise ConfigError("only single-axis derivatives have interior stencils", "derivative")
        return nz[0]

    @property
    def order(self) -> int:
        return sum(self.derivative)


@dataclass(frozen=True)
class Tap:
    field: str
    offset: tuple[int, ...]  # relative to the evaluation index
    weight: float


@dataclass
class SupportRegion:
    centre: np.ndarray
    radius: float
    interior_points: list[tuple[str, tuple[int, ...]]]
    interior_positions: np.ndarray
    boundary_points: list[BoundaryPoint]


@dataclass
class StencilInfo:
    """Diagnostics of the extrapolant behind a modified stencil."""

    basis_order: int
    radius: float
    fields: tuple[str, ...]
    boundary_points: list[BoundaryPoint]
    rank: int
    condition: float
    expansions: int


@dataclass
class ModifiedStencil:
    target: DerivativeSpec
    taps: list[Tap]
    forcing: float = 0.0
    index: tuple[int, ...] | None = None
    info: StencilInfo | None = None

    @property
    def modified(self) -> bool:
        return self.info is not None

    def apply(self, values: dict[str, np.ndarray]) -> float:
        """Evaluate at ``self.index`` given full field arrays."""
        base = np.asarray(self.index)
        total = self.forcing
        for t in self.taps:
            total += t.weight * values[t.field][tuple(base + np.asarray(t.offset))]
        return float(total)


@dataclass
class FieldGeometry:
    name: str
    grid: CartesianGrid
    classification: PointClassification


@dataclass
class Extrapolant:
    layout: DerivativeVectorLayout
    pinv: np.ndarray
    values: list[tuple[str, tuple[int, ...]]]  # sources of the first len(values) rows
    forcing: np.ndarray  # rhs of the remaining (boundary) rows
    support: SupportRegion
    rank: int
    condition: float
    expansions: int

    @property
    def order(self) -> int:
        return next(iter(self.layout.bases.values())).order


@dataclass
class ExtrapolationOperator:
    points: list[tuple[int, ...]]
    weights: np.ndarray  # (len(points), n_values + n_forcing)
    n_values: int


# --------------------------------------------------------------------------
# Interior stencils

def collocation_weights(points: Sequence[float], order: int) -> np.ndarray:
    """Weights on ``points`` (unit spacing, relative to x0) for ``d^order/dx^order``.

    Row ``order`` of the inverse of the square Taylor matrix.
    """
    pts = np.asarray(points, dtype=float)
    n = pts.size
    fact = np.cumprod(np.concatenate([[1.0], np.arange(1, n, dtype=float)]))
    taylor = pts[:, None] ** np.arange(n)[None, :] / fact[None, :]
    rhs = np.zeros(n)
    rhs[order] = 1.0
    return np.linalg.solve(taylor.T, rhs)


def _stencil_points(order_m: int, deriv_order: int, stagger: float) -> np.ndarray:
    if stagger == 0.0:
        return np.arange(-order_m // 2, order_m // 2 + 1, dtype=float)
    if abs(stagger) != 0.5 or deriv_order != 1:
        raise ConfigError("staggered stencils are half-cell first derivatives", "stagger")
    return np.arange(order_m, dtype=float) - (order_m - 1) / 2.0


def interior_stencil(deriv: DerivativeSpec, order_m: int, spacing) -> ModifiedStencil:
    """Standard order-``M`` stencil in physical units.

    Collocated derivatives use ``M+1`` centred points; staggered first
    derivatives use the ``M`` symmetric half-offset points, which is already
    order ``M`` by symmetry.
    """
    if order_m < 2 or order_m % 2:
        raise ConfigError(f"order must be even and >= 2, got {order_m}", "order")
    axis = deriv.axis
    stag = deriv.stagger[axis]
    if any(s != 0.0 for a, s in enumerate(deriv.stagger) if a != axis):
        raise ConfigError("stagger only along the derivative axis", "stagger")
    pts = _stencil_points(order_m, deriv.order, stag)
    w = collocation_weights(pts, deriv.order) / spacing[axis] ** deriv.order
    taps = []
    for s, wk in zip(pts, w):
        off = [0] * deriv.ndims
        off[axis] = int(round(s + stag))
        taps.append(Tap(deriv.field, tuple(off), float(wk)))
    return ModifiedStencil(deriv, taps)


def stencil_sum(stencil: ModifiedStencil) -> float:
    return float(sum(abs(t.weight) for t in stencil.taps))


# --------------------------------------------------------------------------
# Support regions and linear systems

def _indices_within(grid: CartesianGrid, x0: np.ndarray, radius: float):
    h = np.asarray(grid.spacing)
    rel = (x0 - np.asarray(grid.origin)) / h
    lo = np.maximum(np.ceil(rel - radius - _TIE).astype(int), 0)
    hi = np.minimum(np.floor(rel + radius + _TIE).astype(int), np.asarray(grid.shape) - 1)
    if np.any(hi < lo):
        return np.zeros((0, grid.ndims), dtype=int)
    axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    idx = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, grid.ndims)
    d2 = np.sum((idx - rel) ** 2, axis=1)
    return idx[d2 <= radius ** 2 + _TIE]


def build_support(centre, fields: Sequence[FieldGeometry], radius: float,
                  boundary_points: Sequence[BoundaryPoint], host_grid: CartesianGrid | None = None,
                  ) -> SupportRegion:
    """Interior nodes of every field, and boundary points hosted, within ``radius``.

    ``centre`` is a physical position; distances are measured in grid
    increments per dimension.  ``host_grid`` is the grid the boundary points
    were located on (defaults to the first field's grid).
    """
    x0 = np.asarray(centre, dtype=float)
    pts: list[tuple[str, tuple[int, ...]]] = []
    pos: list[np.ndarray] = []
    for fg in fields:
        idx = _indices_within(fg.grid, x0, radius)
        if idx.size:
            keep = fg.classification.labels[tuple(idx.T)] == Label.INTERIOR
            idx = idx[keep]
        for i in idx:
            pts.append((fg.name, tuple(int(v) for v in i)))
        pos.append(np.asarray(fg.grid.origin) + idx * np.asarray(fg.grid.spacing))
    host_grid = host_grid or fields[0].grid
    h = np.asarray(host_grid.spacing)
    bps = [bp for bp in boundary_points
           if np.sum(((host_grid.position(bp.host_index) - x0) / h) ** 2) <= radius ** 2 + _TIE]
    positions = np.concatenate(pos) if pos else np.zeros((0, len(x0)))
    return SupportRegion(x0, radius, pts, positions, bps)


def assemble_system(support: SupportRegion, layout: DerivativeVectorLayout,
                    bcs: Sequence[BoundaryConditionSpec], x0, spacing):
    """Constraint matrix: one Taylor row per interior point, one row per (boundary point, BC).

    Returns ``(A, values, forcing)`` where ``values[k]`` is the (field, index)
    supplying row ``k`` for ``k < len(values)`` and ``forcing`` holds the
    right-hand side of the remaining rows.  BCs touching fields outside the
    layout are skipped.
    """
    x0 = np.asarray(x0, dtype=float)
    rows = []
    values = []
    for f in layout.fields:
        sel = [k for k, (name, _) in enumerate(support.interior_points) if name == f]
        if not sel:
            continue
        block = np.zeros((len(sel), layout.size))
        block[:, layout.block(f)] = taylor_rows(layout.bases[f], support.interior_positions[sel],
                                                x0, spacing)
        rows.append(block)
        values.extend(support.interior_points[k] for k in sel)
    forcing = []
    active = [bc for bc in bcs if set(bc.fields) <= set(layout.fields)]
    for bp in support.boundary_points:
        for bc in active:
            r, g = bc_row(bc, bp.position, x0, layout, spacing, bp.normal)
            rows.append(r[None, :])
            forcing.append(g)
    a = np.concatenate(rows) if rows else np.zeros((0, layout.size))
    return a, values, np.asarray(forcing, dtype=float)


def field_blocks(a: np.ndarray, layout: DerivativeVectorLayout) -> list[tuple[str, ...]]:
    """Groups of fields coupled through the zero pattern of ``a``."""
    parent = {f: f for f in layout.fields}

    def find(f):
        while parent[f] != f:
            parent[f] = parent[parent[f]]
            f = parent[f]
        return f

    for row in a:
        touched = [f for f in layout.fields if np.any(row[layout.block(f)] != 0.0)]
        for f in touched[1:]:
            parent[find(f)] = find(touched[0])
    groups: dict[str, list[str]] = {}
    for f in layout.fields:
        groups.setdefault(find(f), []).append(f)
    return [tuple(g) for g in groups.values()]


def coupled_fields(bcs: Iterable[BoundaryConditionSpec], fields: Sequence[str]) -> dict[str, tuple[str, ...]]:
    """Connected components of ``fields`` under the BCs that link them."""
    parent = {f: f for f in fields}

    def find(f):
        while parent[f] != f:
            f = parent[f]
        return f

    for bc in bcs:
        fs = [f for f in bc.fields if f in parent]
        for f in fs[1:]:
            parent[find(f)] = find(fs[0])
    return {f: tuple(g for g in fields if find(g) == find(f)) for f in fields}


def constrain(x0, fields: Sequence[FieldGeometry], boundary_points: Sequence[BoundaryPoint],
              bcs: Sequence[BoundaryConditionSpec], order_m: int, host_grid: CartesianGrid | None = None,
              radius: float | None = None, max_radius: float | None = None, rcond: float = 0.0,
              index=None) -> Extrapolant:
    """Fit the boundary-constrained basis for one coupled block of fields.

    The support grows by half a cell until the block has full column rank,
    up to ``max_radius`` (default ``2(M+1)``); past that the basis order is
    lowered by two and the search restarts.
    """
    spacing = fields[0].grid.spacing
    names = tuple(fg.name for fg in fields)
    expansions = 0
    m = order_m
    while m >= 2:
        r = (m + 1) / 2.0 if radius is None or m != order_m else radius
        cap = 2.0 * (m + 1) if max_radius is None else max_radius
        layout = DerivativeVectorLayout.uniform(names, len(spacing), m)
        active = [bc for bc in bcs if bc.order <= m]
        while r <= cap + _TIE:
            support = build_support(x0, fields, r, boundary_points, host_grid)
            a, values, forcing = assemble_system(support, layout, active, x0, spacing)
            if a.shape[0] >= layout.size:
                pinv, rank, cond = pinv_with_rank(a, rcond)
                if rank >= layout.size:
                    return Extrapolant(layout, pinv, values, forcing, support, rank, cond, expansions)
            r += RADIUS_STEP
            expansions += 1
        log.info("order reduction %d -> %d at %s", m, m - 2, index)
        m -= 2
    raise UnconstrainableRegion(f"cannot constrain extrapolant at {index} (x0={np.asarray(x0)})",
                                index)


def extrapolation_operator(extrap: Extrapolant, field_name: str, points: Sequence[tuple[int, ...]],
                           grid: CartesianGrid) -> ExtrapolationOperator:
    """``B A^+``: values at ``points`` of ``field_name`` from interior values and forcings."""
    layout = extrap.layout
    pos = np.asarray(grid.origin) + np.asarray(points, dtype=float) * np.asarray(grid.spacing)
    b = np.zeros((len(points), layout.size))
    b[:, layout.block(field_name)] = taylor_rows(layout.bases[field_name], pos,
                                                 extrap.support.centre, grid.spacing)
    return ExtrapolationOperator(list(points), b @ extrap.pinv, len(extrap.values))


def modify_stencil(base: ModifiedStencil, extrap: ExtrapolationOperator | None,
                   extrapolant: Extrapolant | None = None, index=None) -> ModifiedStencil:
    """Replace the base taps listed in ``extrap.points`` by their extrapolations.

    ``base`` carries unit-free offsets; ``index`` anchors them.  Taps of the
    same (field, offset) are merged.
    """
    index = tuple(base.index if index is None else index)
    if extrap is None or not extrap.points:
        return ModifiedStencil(base.target, list(base.taps), base.forcing, index, base.info)
    ext_rows = {tuple(p): k for k, p in enumerate(extrap.points)}
    acc: dict[tuple[str, tuple[int, ...]], float] = {}
    forcing = base.forcing
    values = extrapolant.values if extrapolant is not None else None
    g = extrapolant.forcing if extrapolant is not None else np.zeros(extrap.weights.shape[1] - extrap.n_values)
    for t in base.taps:
        node = tuple(i + o for i, o in zip(index, t.offset))
        k = ext_rows.get(node) if t.field == base.target.field else None
        if k is None:
            key = (t.field, t.offset)
            acc[key] = acc.get(key, 0.0) + t.weight
            continue
        w = extrap.weights[k]
        for j in range(extrap.n_values):
            fname, src = values[j]
            key = (fname, tuple(s - i for s, i in zip(src, index)))
            acc[key] = acc.get(key, 0.0) + t.weight * w[j]
        if g.size:
            forcing += t.weight * float(w[extrap.n_values:] @ g)
    taps = [Tap(f, off, wt) for (f, off), wt in acc.items()]
    info = None
    if extrapolant is not None:
        info = StencilInfo(extrapolant.order, extrapolant.support.radius, extrapolant.layout.fields,
                           extrapolant.support.boundary_points, extrapolant.rank,
                           extrapolant.condition, extrapolant.expansions)
    return ModifiedStencil(base.target, taps, forcing, index, info)


# --------------------------------------------------------------------------
# Whole-grid operator tables

class OperatorBuilder:
    """Shared state for generating modified stencils over a set of fields.

    Extrapolants are cached per (evaluation point, coupled block), so every
    derivative evaluated at the same point reuses one pseudoinverse.
    """

    def __init__(self, fields: Sequence[FieldGeometry], boundary_points: Sequence[BoundaryPoint],
                 bcs: Sequence[BoundaryConditionSpec], order_m: int,
                 host_grid: CartesianGrid | None = None, max_radius: float | None = None,
                 rcond: float = 0.0):
        self.fields = {fg.name: fg for fg in fields}
        self.boundary_points = list(boundary_points)
        self.bcs = list(bcs)
        for bc in self.bcs:
            missing = set(bc.fields) - set(self.fields)
            if missing:
                raise ConfigError(f"boundary condition {bc.name!r} uses unknown fields {missing}", "bcs")
        self.order = order_m
        self.host_grid = host_grid or next(iter(self.fields.values())).grid
        self.max_radius = max_radius
        self.rcond = rcond
        self.blocks = coupled_fields(self.bcs, list(self.fields))
        self._cache: dict = {}

    def extrapolant(self, x0: np.ndarray, field_name: str, index=None) -> Extrapolant:
        block = self.blocks[field_name]
        key = (tuple(float(v) for v in x0), block)
        hit = self._cache.get(key)
        if hit is None:
            bcs = [bc for bc in self.bcs if set(bc.fields) <= set(block)]
            hit = constrain(x0, [self.fields[f] for f in block], self.boundary_points, bcs,
                            self.order, self.host_grid, max_radius=self.max_radius,
                            rcond=self.rcond, index=index)
            self._cache[key] = hit
        return hit

    def table(self, deriv: DerivativeSpec, eval_grid: CartesianGrid,
              eval_class: PointClassification | None = None,
              nodes: Iterable[Sequence[int]] | None = None) -> dict[tuple[int, ...], ModifiedStencil]:
        """Stencils at every non-exterior evaluation node whose footprint fits the grid."""
        return generate_operator_table(deriv, eval_grid, self, eval_class, nodes)


def generate_operator_table(deriv: DerivativeSpec, eval_grid: CartesianGrid, builder: OperatorBuilder,
                            eval_class: PointClassification | None = None,
                            nodes: Iterable[Sequence[int]] | None = None,
                            ) -> dict[tuple[int, ...], ModifiedStencil]:
    """Map evaluation index -> stencil for ``deriv``.

    Exterior evaluation nodes and nodes whose interior footprint leaves the
    array get no entry.  Nodes whose footprint touches exterior or
    eta-excluded nodes get modified stencils with ``x0`` at the evaluation
    point; all others the plain interior stencil.  ``nodes`` restricts the
    table to the given evaluation indices.
    """
    fg = builder.fields[deriv.field]
    base = interior_stencil(deriv, builder.order, fg.grid.spacing)
    offsets = np.array([t.offset for t in base.taps])
    labels = fg.classification.labels
    shape = np.asarray(fg.grid.shape)
    lo = -offsets.min(axis=0)
    hi = shape - 1 - offsets.max(axis=0)
    table: dict[tuple[int, ...], ModifiedStencil] = {}
    eval_labels = eval_class.labels if eval_class is not None else None
    candidates = np.ndindex(*eval_grid.shape) if nodes is None else (tuple(int(i) for i in n) for n in nodes)
    for e in candidates:
        if not eval_grid.contains_index(e):
            continue
        if eval_labels is not None and eval_labels[e] == Label.EXTERIOR:
            continue
        ea = np.asarray(e)
        if np.any(ea < lo) or np.any(ea > hi):
            continue
        nodes = [tuple(ea + o) for o in offsets]
        bad = [n for n in nodes if labels[n] != Label.INTERIOR]
        if not bad:
            table[e] = ModifiedStencil(deriv, list(base.taps), 0.0, e)
            continue
        x0 = eval_grid.position(e)
        extrap = builder.extrapolant(x0, deriv.field, index=e)
        op = extrapolation_operator(extrap, deriv.field, bad, fg.grid)
        stencil = modify_stencil(base, op, extrap, index=e)
        for t in stencil.taps:
            node = tuple(ea + np.asarray(t.offset))
            if builder.fields[t.field].classification.labels[node] != Label.INTERIOR:
                raise InternalError(f"modified stencil at {e} taps non-interior node {node}")
        table[e] = stencil
    return table


def table_to_sparse(table: dict[tuple[int, ...], ModifiedStencil], eval_shape: tuple[int, ...],
                    field_offsets: dict[str, int], field_shapes: dict[str, tuple[int, ...]],
                    total: int) -> tuple[sp.csr_matrix, np.ndarray]:
    """Operator as a sparse matrix over the stacked state, plus forcing vector."""
    rows, cols, vals = [], [], []
    forcing = np.zeros(int(np.prod(eval_shape)))
    for e, st in table.items():
        r = int(np.ravel_multi_index(e, eval_shape))
        forcing[r] = st.forcing
        for t in st.taps:
            node = tuple(i + o for i, o in zip(e, t.offset))
            c = field_offsets[t.field] + int(np.ravel_multi_index(node, field_shapes[t.field]))
            rows.append(r)
            cols.append(c)
            vals.append(t.weight)
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(forcing.size, total))
    mat.sum_duplicates()
    return mat, forcing
