"""Truncated N-D Taylor bases and the matrix rows they induce.

A basis of order ``M`` holds every derivative multi-index of total order
``<= M``.  Rows are nondimensionalised by the grid spacing: the unknown
vector holds ``prod(h**alpha) * d^alpha f(x0)``, so an interior row at ``x``
has entries ``prod(((x - x0)/h)**alpha / alpha!)``.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from math import factorial
from typing import Callable, Sequence, Union

import numpy as np

from .errors import ConfigError

MultiIndex = tuple[int, ...]
Coefficient = Union[float, Callable[[np.ndarray, np.ndarray], float]]


@dataclass(frozen=True)
class MultiIndexBasis:
    ndims: int
    order: int
    indices: tuple[MultiIndex, ...]

    def __len__(self) -> int:
        return len(self.indices)

    def position(self, alpha: MultiIndex) -> int:
        return self.indices.index(tuple(alpha))


def expected_count(ndims: int, order: int) -> int:
    num = 1
    for k in range(1, ndims + 1):
        num *= order + k
    return num // factorial(ndims)


def build_basis(ndims: int, order: int) -> MultiIndexBasis:
    """Graded ordering: ascending total order, then descending leading powers.

    In 2D this gives ``1, x, y, x^2, xy, y^2, x^3, ...``.
    """
    if ndims not in (1, 2, 3):
        raise ConfigError(f"ndims must be 1, 2 or 3, got {ndims}", "ndims")
    if order < 2 or order % 2:
        raise ConfigError(f"basis order must be even and >= 2, got {order}", "order")
    indices: list[MultiIndex] = []
    for total in range(order + 1):
        level = [a for a in itertools.product(range(total + 1), repeat=ndims) if sum(a) == total]
        indices.extend(sorted(level, reverse=True))
    return MultiIndexBasis(ndims, order, tuple(indices))


def _factorials(alphas: np.ndarray) -> np.ndarray:
    table = np.array([factorial(k) for k in range(int(alphas.max(initial=0)) + 1)], dtype=float)
    return np.prod(table[alphas], axis=-1)


def taylor_rows(basis: MultiIndexBasis, points, x0, spacing) -> np.ndarray:
    """Taylor rows for many points at once, shape ``(npoints, len(basis))``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    off = (pts - np.asarray(x0, float)) / np.asarray(spacing, float)
    alphas = np.array(basis.indices)
    powers = np.prod(off[:, None, :] ** alphas[None, :, :], axis=-1)
    return powers / _factorials(alphas)[None, :]


def taylor_row(basis: MultiIndexBasis, x, x0, spacing) -> np.ndarray:
    return taylor_rows(basis, [x], x0, spacing)[0]


def derivative_of_monomial(alpha: Sequence[int], beta: Sequence[int]) -> Callable[[np.ndarray], float]:
    """``offset -> d^beta [offset^alpha / alpha!]`` in closed form."""
    alpha = tuple(alpha)
    beta = tuple(beta)
    if any(b > a for a, b in zip(alpha, beta)):
        return lambda offset: 0.0
    rem = tuple(a - b for a, b in zip(alpha, beta))
    denom = float(math.prod(factorial(r) for r in rem))

    def evaluate(offset) -> float:
        return math.prod(float(o) ** r for o, r in zip(offset, rem)) / denom

    return evaluate


# --------------------------------------------------------------------------
# Boundary conditions

@dataclass(frozen=True)
class BCTerm:
    field: str
    index: MultiIndex
    coefficient: Coefficient = 1.0

    @property
    def order(self) -> int:
        return sum(self.index)

    def coefficient_at(self, position, normal) -> float:
        c = self.coefficient
        return float(c(position, normal)) if callable(c) else float(c)


@dataclass(frozen=True)
class BoundaryConditionSpec:
    """``sum_k c_k(x_b) d^{beta_k} f_k(x_b) = g(x_b)``."""

    terms: tuple[BCTerm, ...]
    forcing: Coefficient = 0.0
    name: str = ""

    def __post_init__(self):
        if not self.terms:
            raise ConfigError("a boundary condition needs at least one term", "terms")
        object.__setattr__(self, "terms", tuple(self.terms))

    @property
    def order(self) -> int:
        return max(t.order for t in self.terms)

    @property
    def fields(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(t.field for t in self.terms))

    def forcing_at(self, position, normal) -> float:
        g = self.forcing
        return float(g(position, normal)) if callable(g) else float(g)


@dataclass
class DerivativeVectorLayout:
    fields: tuple[str, ...]
    bases: dict[str, MultiIndexBasis] = field(default_factory=dict)

    @classmethod
    def uniform(cls, fields: Sequence[str], ndims: int, order: int) -> "DerivativeVectorLayout":
        basis = build_basis(ndims, order)
        return cls(tuple(fields), {f: basis for f in fields})

    def offset(self, field_id: str) -> int:
        off = 0
        for f in self.fields:
            if f == field_id:
                return off
            off += len(self.bases[f])
        raise KeyError(field_id)

    def block(self, field_id: str) -> slice:
        start = self.offset(field_id)
        return slice(start, start + len(self.bases[field_id]))

    @property
    def size(self) -> int:
        return sum(len(self.bases[f]) for f in self.fields)


def bc_scale(order: int, spacing) -> float:
    """Row scaling that makes a BC row of the given order O(1)."""
    return float(min(spacing)) ** order


def bc_row(bc: BoundaryConditionSpec, x_b, x0, layout: DerivativeVectorLayout, spacing,
           normal=None) -> tuple[np.ndarray, float]:
    """Row of the constraint matrix for ``bc`` imposed at ``x_b``.

    Both the row and the forcing are multiplied by ``min(spacing)**order`` so
    that they are O(1); with unit spacing they equal the plain values.
    """
    x_b = np.asarray(x_b, float)
    h = np.asarray(spacing, float)
    normal = np.zeros_like(x_b) if normal is None else np.asarray(normal, float)
    off = (x_b - np.asarray(x0, float)) / h
    row = np.zeros(layout.size)
    scale = bc_scale(bc.order, spacing)
    for term in bc.terms:
        if term.field not in layout.fields:
            raise ConfigError(f"boundary term refers to unknown field {term.field!r}", "field")
        basis = layout.bases[term.field]
        if term.order > basis.order:
            raise ConfigError(
                f"boundary term of order {term.order} exceeds basis order {basis.order}", "order")
        c = term.coefficient_at(x_b, normal)
        if c == 0.0:
            continue
        c *= scale / math.prod(float(hn) ** b for hn, b in zip(h, term.index))
        start = layout.offset(term.field)
        offs = off.tolist()
        for k, alpha in enumerate(basis.indices):
            if all(a >= b for a, b in zip(alpha, term.index)):
                row[start + k] += c * derivative_of_monomial(alpha, term.index)(offs)
    return row, bc.forcing_at(x_b, normal) * scale


# --------------------------------------------------------------------------
# Boundary-condition families

class BCKind(enum.Enum):
    FREE_PRESSURE = "free_pressure"
    RIGID_PRESSURE = "rigid_pressure"
    FREE_VELOCITY = "free_velocity"
    RIGID_VELOCITY = "rigid_velocity"


VELOCITY_FIELDS = ("vx", "vy", "vz")


def polyharmonic(ndims: int, power: int) -> dict[MultiIndex, int]:
    """Multi-index expansion of the ``power``-th power of the Laplacian."""
    out: dict[MultiIndex, int] = {}
    for ks in itertools.product(range(power + 1), repeat=ndims):
        if sum(ks) != power:
            continue
        coeff = factorial(power)
        for k in ks:
            coeff //= factorial(k)
        out[tuple(2 * k for k in ks)] = coeff
    return out


def _unit(ndims: int, axis: int) -> MultiIndex:
    return tuple(1 if a == axis else 0 for a in range(ndims))


def _add(*idx: MultiIndex) -> MultiIndex:
    return tuple(int(sum(v)) for v in zip(*idx))


def _normal_component(axis: int, scale: float = 1.0):
    return lambda position, normal: scale * normal[axis]


def bc_family(kind: BCKind | str, order: int, ndims: int, pressure: str = "p",
              velocities: Sequence[str] | None = None) -> list[BoundaryConditionSpec]:
    """All conditions of the family with total derivative order ``<= order``.

    * FREE_PRESSURE: ``lap^j p = 0`` (orders 0, 2, 4, ...)
    * RIGID_PRESSURE: ``n . grad(lap^j p) = 0`` (orders 1, 3, ...)
    * FREE_VELOCITY: ``lap^j div v = 0`` (orders 1, 3, ...)
    * RIGID_VELOCITY: ``n . v = 0`` then ``n . grad(lap^j div v) = 0`` (orders 0, 2, ...)
    """
    kind = BCKind(kind)
    if order % 2:
        raise ConfigError(f"order must be even, got {order}", "order")
    vel = tuple(velocities or VELOCITY_FIELDS[:ndims])
    out: list[BoundaryConditionSpec] = []
    for j in range(order + 1):
        lap = polyharmonic(ndims, j)
        terms: list[BCTerm] = []
        if kind is BCKind.FREE_PRESSURE:
            terms = [BCTerm(pressure, idx, float(c)) for idx, c in lap.items()]
            name = f"lap^{j} p"
        elif kind is BCKind.RIGID_PRESSURE:
            terms = [BCTerm(pressure, _add(idx, _unit(ndims, m)), _normal_component(m, c))
                     for m in range(ndims) for idx, c in lap.items()]
            name = f"n.grad lap^{j} p"
        elif kind is BCKind.FREE_VELOCITY:
            terms = [BCTerm(vel[m], _add(idx, _unit(ndims, m)), float(c))
                     for m in range(ndims) for idx, c in lap.items()]
            name = f"lap^{j} div v"
        else:
            if j == 0:
                terms = [BCTerm(vel[m], (0,) * ndims, _normal_component(m)) for m in range(ndims)]
                name = "n.v"
            else:
                inner = polyharmonic(ndims, j - 1)
                terms = [BCTerm(vel[l], _add(idx, _unit(ndims, m), _unit(ndims, l)),
                                _normal_component(m, c))
                         for l in range(ndims) for m in range(ndims) for idx, c in inner.items()]
                name = f"n.grad lap^{j - 1} div v"
        spec = BoundaryConditionSpec(tuple(terms), 0.0, name)
        if spec.order > order:
            break
        out.append(spec)
    return out
