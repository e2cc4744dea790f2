"""Explicit time stepping of the acoustic wave equation with immersed topography.

Two formulations:

* ``acoustic2``: ``p_tt = c^2 lap p + f`` with the leapfrog update
  ``p+ = 2p - p- + dt^2 c^2 lap p + dt^2 f``.
* ``acoustic1``: ``p_t = rho c^2 div v + f``, ``v_t = grad p / rho`` on a
  staggered grid (``v_n`` offset half a cell along ``n``), velocity updated
  first at half steps.

Nodes outside the domain hold zero for all time.  Nodes whose interior
stencil would leave the array form the outer frame and are set from an
edge function each step (zero unless given).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .basis import BCKind, BoundaryConditionSpec, bc_family
from .errors import ConfigError, DivergenceError
from .geometry import (BoundaryPoint, CartesianGrid, Label, SignedDistanceField, classify_points,
                       locate_boundary_points)
from .stencils import (DerivativeSpec, FieldGeometry, OperatorBuilder,
                       interior_stencil, stencil_sum, table_to_sparse)

log = logging.getLogger(__name__)

VELOCITY_NAMES = ("vx", "vy", "vz")
DIVERGENCE_CHECK_EVERY = 100
FORMULATIONS = ("acoustic2", "acoustic1")


@dataclass
class Material:
    c: float | np.ndarray
    rho: float | np.ndarray = 1.0

    def __post_init__(self):
        if np.any(np.asarray(self.c) <= 0) or np.any(np.asarray(self.rho) <= 0):
            raise ConfigError("wavespeed and density must be positive", "material")

    @property
    def c_max(self) -> float:
        return float(np.max(self.c))


@dataclass
class RickerSource:
    f0: float
    t0: float
    location: Sequence[float]
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.f0 > 0:
            raise ConfigError("source peak frequency must be positive", "source.f0")

    def __call__(self, t: float) -> float:
        return self.amplitude * ricker(t, self.f0, self.t0)


@dataclass
class Receiver:
    location: Sequence[float]
    field: str = "p"
    times: list[float] = dc_field(default_factory=list)
    trace: list[float] = dc_field(default_factory=list)


def ricker(t, f0: float, t0: float):
    """``(1 - 2 pi^2 f0^2 tau^2) exp(-pi^2 f0^2 tau^2)`` with ``tau = t - t0``."""
    a = (np.pi * f0 * (np.asarray(t, dtype=float) - t0)) ** 2
    return (1.0 - 2.0 * a) * np.exp(-a)


def critical_dt(grid: CartesianGrid, material: Material, order_m: int, formulation: str) -> float:
    """Leapfrog stability limit of the interior scheme (von Neumann).

    ``acoustic2``: ``2 / (c_max sqrt(sum_n S_M / h_n^2))`` with ``S_M`` the
    absolute weight sum of the 1D second-derivative stencil.
    ``acoustic1``: ``2 / (c_max T_M sqrt(sum_n 1 / h_n^2))`` with ``T_M`` the
    absolute weight sum of the staggered first-derivative stencil.
    """
    inv_h2 = sum(1.0 / h ** 2 for h in grid.spacing)
    if formulation == "acoustic2":
        s = stencil_sum(interior_stencil(DerivativeSpec.along("p", 0, 2, 1), order_m, (1.0,)))
        return 2.0 / (material.c_max * np.sqrt(s * inv_h2))
    if formulation == "acoustic1":
        t = stencil_sum(interior_stencil(DerivativeSpec.along("p", 0, 1, 1, 0.5), order_m, (1.0,)))
        return 2.0 / (material.c_max * t * np.sqrt(inv_h2))
    raise ConfigError(f"unknown formulation {formulation!r}", "equation")


# --------------------------------------------------------------------------
# Domain and operators

@dataclass
class Domain:
    """Geometry of every field: grids, SDFs, classifications, boundary points."""

    grid: CartesianGrid
    formulation: str
    fields: dict[str, FieldGeometry]
    sdfs: dict[str, SignedDistanceField]
    boundary_points: list[BoundaryPoint]

    @property
    def ndims(self) -> int:
        return self.grid.ndims

    @property
    def names(self) -> list[str]:
        return list(self.fields)


def build_domain(grid: CartesianGrid, sdf_on: Callable[[CartesianGrid], SignedDistanceField],
                 formulation: str = "acoustic2", eta_pressure: float = 0.5,
                 eta_velocity: float = 0.0) -> Domain:
    """Evaluate the SDF on every (staggered) subgrid and classify its nodes.

    Boundary points come from the pressure grid and are shared by all fields.
    """
    if formulation not in FORMULATIONS:
        raise ConfigError(f"unknown formulation {formulation!r}", "equation")
    sdf = sdf_on(grid)
    bps = locate_boundary_points(sdf)
    fields = {"p": FieldGeometry("p", grid, classify_points(sdf, bps, eta_pressure))}
    sdfs = {"p": sdf}
    if formulation == "acoustic1":
        for a in range(grid.ndims):
            sub = grid.staggered([0.5 if b == a else 0.0 for b in range(grid.ndims)])
            s = sdf_on(sub)
            name = VELOCITY_NAMES[a]
            sdfs[name] = s
            fields[name] = FieldGeometry(name, sub, classify_points(s, bps, eta_velocity))
    return Domain(grid, formulation, fields, sdfs, bps)


def boundary_conditions(domain: Domain, kind: str, order_m: int) -> list[BoundaryConditionSpec]:
    if kind not in ("free", "rigid"):
        raise ConfigError(f"boundary kind must be 'free' or 'rigid', got {kind!r}", "boundary.kind")
    nd = domain.ndims
    bcs = bc_family(BCKind.FREE_PRESSURE if kind == "free" else BCKind.RIGID_PRESSURE, order_m, nd)
    if domain.formulation == "acoustic1":
        vk = BCKind.FREE_VELOCITY if kind == "free" else BCKind.RIGID_VELOCITY
        bcs += bc_family(vk, order_m, nd, velocities=VELOCITY_NAMES[:nd])
    return bcs


@dataclass
class Operators:
    """Sparse operators over the stacked state ``[p, vx, vy, (vz)]``."""

    domain: Domain
    order: int
    offsets: dict[str, int]
    active: dict[str, np.ndarray]  # flat bool masks of updated nodes
    laplacian: sp.csr_matrix | None = None
    laplacian_forcing: np.ndarray | None = None
    gradient: list[sp.csr_matrix] = dc_field(default_factory=list)
    gradient_forcing: list[np.ndarray] = dc_field(default_factory=list)
    divergence: sp.csr_matrix | None = None
    divergence_forcing: np.ndarray | None = None
    tables: dict[DerivativeSpec, dict] = dc_field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(fg.grid.size for fg in self.domain.fields.values())

    def stack(self, values: dict[str, np.ndarray]) -> np.ndarray:
        return np.concatenate([values[f].ravel() for f in self.domain.names])


def build_operators(domain: Domain, kind: str = "free", order_m: int = 4,
                    bcs: Sequence[BoundaryConditionSpec] | None = None,
                    max_radius: float | None = None) -> Operators:
    """Generate every stencil table the chosen formulation needs."""
    if bcs is None:
        bcs = boundary_conditions(domain, kind, order_m)
        if kind == "rigid" and domain.formulation == "acoustic1" and domain.boundary_points:
            log.warning("rigid surfaces with the staggered formulation can develop local "
                        "instabilities for some geometries; prefer acoustic2")
    builder = OperatorBuilder(list(domain.fields.values()), domain.boundary_points, bcs, order_m,
                              host_grid=domain.grid, max_radius=max_radius)
    offsets, off = {}, 0
    for name, fg in domain.fields.items():
        offsets[name] = off
        off += fg.grid.size
    shapes = {n: fg.grid.shape for n, fg in domain.fields.items()}
    ops = Operators(domain, order_m, offsets, {})
    nd = domain.ndims
    p = domain.fields["p"]

    def sparse(spec, eval_fg):
        table = builder.table(spec, eval_fg.grid, eval_fg.classification)
        ops.tables[spec] = table
        mat, g = table_to_sparse(table, eval_fg.grid.shape, offsets, shapes, off)
        mask = np.zeros(eval_fg.grid.size, dtype=bool)
        if table:
            mask[np.ravel_multi_index(np.array(list(table)).T, eval_fg.grid.shape)] = True
        return mat, g, mask

    if domain.formulation == "acoustic2":
        mats, forcing, mask = [], np.zeros(p.grid.size), np.ones(p.grid.size, dtype=bool)
        for a in range(nd):
            m, g, msk = sparse(DerivativeSpec.along("p", a, 2, nd), p)
            mats.append(m)
            forcing += g
            mask &= msk
        ops.laplacian = _mask_rows(sum(mats[1:], mats[0]), mask)
        ops.laplacian_forcing = np.where(mask, forcing, 0.0)
        ops.active["p"] = mask
    else:
        mats, forcing, pmask = [], np.zeros(p.grid.size), np.ones(p.grid.size, dtype=bool)
        for a in range(nd):
            vname = VELOCITY_NAMES[a]
            vfg = domain.fields[vname]
            m, g, msk = sparse(DerivativeSpec.along("p", a, 1, nd, 0.5), vfg)
            ops.gradient.append(_mask_rows(m, msk))
            ops.gradient_forcing.append(np.where(msk, g, 0.0))
            ops.active[vname] = msk
            m, g, msk = sparse(DerivativeSpec.along(vname, a, 1, nd, -0.5), p)
            mats.append(m)
            forcing += g
            pmask &= msk
        ops.divergence = _mask_rows(sum(mats[1:], mats[0]), pmask)
        ops.divergence_forcing = np.where(pmask, forcing, 0.0)
        ops.active["p"] = pmask
        ops.active = {"p": pmask, **{VELOCITY_NAMES[a]: ops.active[VELOCITY_NAMES[a]] for a in range(nd)}}
    return ops


def _mask_rows(mat: sp.csr_matrix, mask: np.ndarray) -> sp.csr_matrix:
    return (sp.diags(mask.astype(float)) @ mat).tocsr()


# --------------------------------------------------------------------------
# State and stepping

@dataclass
class FieldState:
    values: dict[str, np.ndarray]
    previous: dict[str, np.ndarray] = dc_field(default_factory=dict)  # p at t - dt (acoustic2)
    time: float = 0.0
    step: int = 0

    def copy(self) -> "FieldState":
        return FieldState({k: v.copy() for k, v in self.values.items()},
                          {k: v.copy() for k, v in self.previous.items()}, self.time, self.step)


def zero_state(domain: Domain) -> FieldState:
    vals = {n: np.zeros(fg.grid.shape) for n, fg in domain.fields.items()}
    prev = {"p": np.zeros(domain.grid.shape)} if domain.formulation == "acoustic2" else {}
    return FieldState(vals, prev)


EdgeFunction = Callable[[str, float], np.ndarray]


def _finish(name: str, new: np.ndarray, ops: Operators, t: float, edge: EdgeFunction | None):
    """Impose frame values and the exterior freeze on a flat field update."""
    fg = ops.domain.fields[name]
    exterior = fg.classification.labels.ravel() == Label.EXTERIOR
    frame = ~ops.active[name] & ~exterior
    if edge is None:
        new[frame] = 0.0
    else:
        new[frame] = np.asarray(edge(name, t), dtype=float).ravel()[frame]
    new[exterior] = 0.0
    return new.reshape(fg.grid.shape)


def _node_of(grid: CartesianGrid, location) -> tuple[int, ...]:
    rel = (np.asarray(location, float) - np.asarray(grid.origin)) / np.asarray(grid.spacing)
    idx = tuple(int(v) for v in np.rint(rel))
    if not grid.contains_index(idx):
        raise ConfigError(f"location {list(location)} lies outside the grid", "location")
    return idx


def inject_source(values: np.ndarray, domain: Domain, source: RickerSource, t: float, scale: float):
    """Add ``scale * source(t)`` at the pressure node nearest ``source.location``."""
    idx = _node_of(domain.grid, source.location)
    if domain.fields["p"].classification.labels[idx] == Label.EXTERIOR:
        raise ConfigError(f"source at {list(source.location)} lies outside the domain", "source.location")
    values[idx] += scale * source(t)


def check_finite(state: FieldState, force: bool = False):
    if force or state.step % DIVERGENCE_CHECK_EVERY == 0:
        for name, v in state.values.items():
            if not np.all(np.isfinite(v)):
                raise DivergenceError(f"non-finite {name} at step {state.step}", state.step)


def _material_on(grid_values, shape, axis=None):
    arr = np.asarray(grid_values, dtype=float)
    if arr.ndim == 0:
        return float(arr)
    if arr.shape != shape:
        raise ConfigError(f"material array shape {arr.shape} != grid shape {shape}", "material")
    if axis is None:
        return arr.ravel()
    shifted = np.concatenate([np.take(arr, np.arange(1, arr.shape[axis]), axis=axis),
                              np.take(arr, [arr.shape[axis] - 1], axis=axis)], axis=axis)
    return (0.5 * (arr + shifted)).ravel()


def step_second_order(state: FieldState, ops: Operators, material: Material, dt: float,
                      sources: Sequence[RickerSource] = (), edge: EdgeFunction | None = None,
                      ) -> FieldState:
    p = state.values["p"].ravel()
    c2 = _material_on(material.c, ops.domain.grid.shape) ** 2
    lap = ops.laplacian @ p + ops.laplacian_forcing
    new = 2.0 * p - state.previous["p"].ravel() + dt * dt * c2 * lap
    new = new.reshape(ops.domain.grid.shape)
    for src in sources:
        inject_source(new, ops.domain, src, state.time, dt * dt)
    t_new = state.time + dt
    out = FieldState({"p": _finish("p", new.ravel(), ops, t_new, edge)}, {"p": state.values["p"]},
                     t_new, state.step + 1)
    check_finite(out)
    return out


def step_first_order(state: FieldState, ops: Operators, material: Material, dt: float,
                     sources: Sequence[RickerSource] = (), edge: EdgeFunction | None = None,
                     ) -> FieldState:
    """One staggered leapfrog step: ``v`` from ``t - dt/2`` to ``t + dt/2``, then ``p``."""
    dom = ops.domain
    shape = dom.grid.shape
    vnames = VELOCITY_NAMES[:dom.ndims]
    u = ops.stack(state.values)
    new_vals = {}
    for a, vn in enumerate(vnames):
        rho = _material_on(material.rho, shape, axis=a)
        v = state.values[vn].ravel()
        upd = v + dt / rho * (ops.gradient[a] @ u + ops.gradient_forcing[a])
        new_vals[vn] = _finish(vn, upd, ops, state.time + 0.5 * dt, edge)
    u_half = ops.stack({"p": state.values["p"], **new_vals})
    rho_c2 = _material_on(material.rho, shape) * _material_on(material.c, shape) ** 2
    p = state.values["p"].ravel()
    newp = (p + dt * rho_c2 * (ops.divergence @ u_half + ops.divergence_forcing)).reshape(shape)
    for src in sources:
        inject_source(newp, dom, src, state.time + 0.5 * dt, dt)
    t_new = state.time + dt
    new_vals["p"] = _finish("p", newp.ravel(), ops, t_new, edge)
    out = FieldState({k: new_vals[k] for k in dom.names}, {}, t_new, state.step + 1)
    check_finite(out)
    return out


def initialize_velocity(state: FieldState, ops: Operators, material: Material, dt: float) -> FieldState:
    """Move ``v`` from ``t`` back to ``t - dt/2`` by a half explicit Euler step from ``p``.

    Staggered states store ``p`` at ``state.time`` and ``v`` half a step earlier.
    """
    dom = ops.domain
    u = ops.stack(state.values)
    vals = dict(state.values)
    for a, vn in enumerate(VELOCITY_NAMES[:dom.ndims]):
        rho = _material_on(material.rho, dom.grid.shape, axis=a)
        upd = state.values[vn].ravel() - 0.5 * dt / rho * (ops.gradient[a] @ u + ops.gradient_forcing[a])
        upd[dom.fields[vn].classification.labels.ravel() == Label.EXTERIOR] = 0.0
        vals[vn] = upd.reshape(dom.fields[vn].grid.shape)
    return FieldState(vals, {}, state.time, state.step)


def step(state: FieldState, ops: Operators, material: Material, dt: float,
         sources: Sequence[RickerSource] = (), edge: EdgeFunction | None = None) -> FieldState:
    if ops.domain.formulation == "acoustic2":
        return step_second_order(state, ops, material, dt, sources, edge)
    return step_first_order(state, ops, material, dt, sources, edge)


def sample(values: np.ndarray, grid: CartesianGrid, location) -> float:
    """Multilinear interpolation of a node field at ``location``."""
    rel = (np.asarray(location, float) - np.asarray(grid.origin)) / np.asarray(grid.spacing)
    base = np.clip(np.floor(rel).astype(int), 0, np.asarray(grid.shape) - 2)
    frac = rel - base
    total = 0.0
    for corner in np.ndindex(*(2,) * grid.ndims):
        w = np.prod([f if c else 1.0 - f for c, f in zip(corner, frac)])
        if w != 0.0:
            total += w * values[tuple(base + np.asarray(corner))]
    return float(total)


def check_receiver(domain: Domain, rec: Receiver) -> None:
    if rec.field not in domain.fields:
        raise ConfigError(f"receiver field {rec.field!r} not simulated", "outputs.receivers")
    fg = domain.fields[rec.field]
    rel = (np.asarray(rec.location, float) - np.asarray(fg.grid.origin)) / np.asarray(fg.grid.spacing)
    if np.any(rel < 0) or np.any(rel > np.asarray(fg.grid.shape) - 1):
        raise ConfigError(f"receiver at {list(rec.location)} outside the grid", "outputs.receivers")
    if domain.sdfs[rec.field].interpolate(np.asarray(rec.location, float)[None])[0] < 0:
        raise ConfigError(f"receiver at {list(rec.location)} lies outside the domain", "outputs.receivers")


def record_receivers(state: FieldState, domain: Domain, receivers: Sequence[Receiver]) -> None:
    for rec in receivers:
        rec.times.append(state.time)
        rec.trace.append(sample(state.values[rec.field], domain.fields[rec.field].grid, rec.location))


def run(state: FieldState, ops: Operators, material: Material, dt: float, nsteps: int,
        sources: Sequence[RickerSource] = (), receivers: Sequence[Receiver] = (),
        edge: EdgeFunction | None = None, callback: Callable[[FieldState], None] | None = None,
        ) -> FieldState:
    """Advance ``nsteps``; receivers record the initial state and every step."""
    for rec in receivers:
        check_receiver(ops.domain, rec)
    record_receivers(state, ops.domain, receivers)
    for _ in range(nsteps):
        state = step(state, ops, material, dt, sources, edge)
        record_receivers(state, ops.domain, receivers)
        if callback is not None:
            callback(state)
    check_finite(state, force=True)
    return state
