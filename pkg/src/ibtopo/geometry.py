"""Topography as a signed-distance field on a Cartesian grid.

Sign convention: ``s >= 0`` inside the computational domain, ``s < 0``
outside, the surface being the zero isosurface.  The last grid axis is the
vertical one; surfaces are given as elevation functions of the remaining
(horizontal) coordinates.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial import cKDTree

from .errors import GeometryError

log = logging.getLogger(__name__)

# Surface sampling density for the brute-force distance, per grid increment.
SAMPLES_PER_CELL = 8
# Extra horizontal extent sampled beyond the grid, in grid increments.
SAMPLE_MARGIN = 4


@dataclass(frozen=True)
class CartesianGrid:
    shape: tuple[int, ...]
    spacing: tuple[float, ...]
    origin: tuple[float, ...] = None  # type: ignore[assignment]

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        spacing = tuple(float(h) for h in self.spacing)
        origin = (0.0,) * len(shape) if self.origin is None else tuple(float(o) for o in self.origin)
        if not 1 <= len(shape) <= 3:
            raise GeometryError(f"grids must be 1D, 2D or 3D, got {len(shape)} dimensions")
        if len(spacing) != len(shape) or len(origin) != len(shape):
            raise GeometryError("shape, spacing and origin must have equal length")
        if any(n < 4 for n in shape):
            raise GeometryError(f"every grid dimension needs at least 4 nodes, got {shape}")
        if any(not h > 0 for h in spacing):
            raise GeometryError(f"grid spacing must be positive, got {spacing}")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def ndims(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axis_coords(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.spacing[axis] * np.arange(self.shape[axis])

    def nodes(self) -> np.ndarray:
        """All node positions, shape ``(*shape, ndims)``."""
        mesh = np.meshgrid(*(self.axis_coords(a) for a in range(self.ndims)), indexing="ij")
        return np.stack(mesh, axis=-1)

    def position(self, index) -> np.ndarray:
        return np.asarray(self.origin) + np.asarray(self.spacing) * np.asarray(index, dtype=float)

    def contains_index(self, index) -> bool:
        return all(0 <= i < n for i, n in zip(index, self.shape))

    def staggered(self, offset: Sequence[float]) -> "CartesianGrid":
        """Same lattice shifted by ``offset`` grid increments per dimension."""
        origin = tuple(o + f * h for o, f, h in zip(self.origin, offset, self.spacing))
        return CartesianGrid(self.shape, self.spacing, origin)

    def extent(self) -> list[tuple[float, float]]:
        return [(self.origin[a], self.origin[a] + self.spacing[a] * (self.shape[a] - 1))
                for a in range(self.ndims)]


@dataclass
class SignedDistanceField:
    grid: CartesianGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise GeometryError(f"SDF values shape {self.values.shape} != grid shape {self.grid.shape}")

    def gradient(self) -> list[np.ndarray]:
        """Central differences, one-sided second order at the grid edges."""
        if self.grid.ndims == 1:
            return [np.gradient(self.values, self.grid.spacing[0], edge_order=2)]
        return list(np.gradient(self.values, *self.grid.spacing, edge_order=2))

    def interpolate(self, points) -> np.ndarray:
        """Multilinear interpolation at ``points`` (shape ``(..., ndims)``)."""
        axes = [self.grid.axis_coords(a) for a in range(self.grid.ndims)]
        interp = RegularGridInterpolator(axes, self.values, method="linear",
                                         bounds_error=False, fill_value=None)
        return interp(np.asarray(points, dtype=float))


@dataclass(frozen=True)
class BoundaryPoint:
    host_index: tuple[int, ...]
    position: np.ndarray = field(compare=False)
    normal: np.ndarray = field(compare=False)


class Label(IntEnum):
    INTERIOR = 0
    EXTERIOR = 1
    ETA_EXCLUDED = 2


@dataclass
class PointClassification:
    grid: CartesianGrid
    labels: np.ndarray  # int8 array of Label values

    def interior(self) -> np.ndarray:
        return self.labels == Label.INTERIOR

    def exterior(self) -> np.ndarray:
        return self.labels == Label.EXTERIOR

    def excluded(self) -> np.ndarray:
        return self.labels == Label.ETA_EXCLUDED

    def label(self, index) -> Label:
        return Label(int(self.labels[tuple(index)]))


# --------------------------------------------------------------------------
# Surfaces: vectorized elevation functions of the horizontal coordinates.
# Each takes an array of shape (N, ndims-1) and returns N elevations.

@dataclass(frozen=True)
class Plane:
    """Elevation ``height + slope . (x - anchor)``; distances are exact."""

    height: float
    slope: tuple[float, ...] = (0.0,)
    anchor: tuple[float, ...] = (0.0,)

    @classmethod
    def tilted(cls, point: Sequence[float], angle_deg: float) -> "Plane":
        """2D plane through ``point`` rising at ``angle_deg`` from the x axis."""
        return cls(float(point[1]), (float(np.tan(np.radians(angle_deg))),), (float(point[0]),))

    def __call__(self, xh: np.ndarray) -> np.ndarray:
        xh = np.atleast_2d(np.asarray(xh, dtype=float))
        slope = np.resize(np.asarray(self.slope, float), xh.shape[1])
        anchor = np.resize(np.asarray(self.anchor, float), xh.shape[1])
        return self.height + (xh - anchor) @ slope

    def signed_distance(self, pts: np.ndarray) -> np.ndarray:
        """Distance of ``pts`` below the plane (negative above)."""
        xh, z = pts[..., :-1], pts[..., -1]
        slope = np.resize(np.asarray(self.slope, float), xh.shape[-1])
        flat = xh.reshape(-1, xh.shape[-1]) if xh.shape[-1] else np.zeros((z.size, 0))
        h = self(flat).reshape(z.shape) if xh.shape[-1] else np.full(z.shape, self.height)
        return (h - z) / np.sqrt(1.0 + slope @ slope)


@dataclass(frozen=True)
class SineHill:
    """Cosine topography peaking at ``centre`` (radially symmetric in 3D)."""

    base: float
    amplitude: float
    wavelength: float
    centre: tuple[float, ...] = (0.0,)

    def __call__(self, xh: np.ndarray) -> np.ndarray:
        xh = np.atleast_2d(np.asarray(xh, dtype=float))
        c = np.resize(np.asarray(self.centre, float), xh.shape[1])
        r = np.sqrt(np.sum((xh - c) ** 2, axis=1))
        return self.base + self.amplitude * np.cos(2 * np.pi * r / self.wavelength)


@dataclass(frozen=True)
class Arc:
    """Circular (spherical in 3D) cap: a dome if ``convex`` else a bowl."""

    centre: tuple[float, ...]
    radius: float
    convex: bool = True

    def __call__(self, xh: np.ndarray) -> np.ndarray:
        xh = np.atleast_2d(np.asarray(xh, dtype=float))
        ch = np.asarray(self.centre[:-1], float)
        r2 = np.sum((xh - ch) ** 2, axis=1)
        root = np.sqrt(np.maximum(self.radius ** 2 - r2, 0.0))
        return self.centre[-1] + (root if self.convex else -root)


Surface = Callable[[np.ndarray], np.ndarray]


def _side_sign(side: str) -> float:
    if side not in ("below", "above"):
        raise GeometryError(f"side must be 'below' or 'above', got {side!r}")
    return 1.0 if side == "below" else -1.0


def sdf_from_function(grid: CartesianGrid, surface: Surface, side: str = "below",
                      sample_bounds: list[tuple[float, float]] | None = None) -> SignedDistanceField:
    """Signed distance from every node of ``grid`` to the elevation ``surface``.

    ``side`` selects which half-space is the computational domain.  Planes
    are handled exactly; other surfaces by nearest-sample search over a dense
    sampling followed by Newton refinement of the foot point.
    """
    sign = _side_sign(side)
    pts = grid.nodes()
    if grid.ndims == 1:
        # A 1D "surface" is a single elevation on the only (vertical) axis.
        level = float(np.ravel(surface(np.zeros((1, 0))))[0])
        return SignedDistanceField(grid, sign * (level - pts[..., 0]))
    if isinstance(surface, Plane):
        return SignedDistanceField(grid, sign * surface.signed_distance(pts))

    flat = pts.reshape(-1, grid.ndims)
    dist = _distance_to_graph(flat, surface, grid, sample_bounds)
    below = flat[:, -1] <= surface(flat[:, :-1])
    on = flat[:, -1] == surface(flat[:, :-1])
    s = np.where(below, dist, -dist)
    s[on] = 0.0
    return SignedDistanceField(grid, sign * s.reshape(grid.shape))


def _distance_to_graph(q: np.ndarray, surface: Surface, grid: CartesianGrid,
                       bounds: list[tuple[float, float]] | None) -> np.ndarray:
    nh = grid.ndims - 1
    hspace = grid.spacing[:nh]
    if bounds is None:
        bounds = [(lo - SAMPLE_MARGIN * h, hi + SAMPLE_MARGIN * h)
                  for (lo, hi), h in zip(grid.extent()[:nh], hspace)]
    axes = [np.linspace(lo, hi, int(np.ceil((hi - lo) / (h / SAMPLES_PER_CELL))) + 1)
            for (lo, hi), h in zip(bounds, hspace)]
    samp_h = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, nh)
    samples = np.column_stack([samp_h, surface(samp_h)])
    dist, idx = cKDTree(samples).query(q)
    t = samp_h[idx].copy()

    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    step_cap = np.array([a[1] - a[0] if a.size > 1 else 1.0 for a in axes])
    eps = 1e-4 * min(hspace)

    def objective(tt):
        z = surface(tt)
        return 0.5 * (np.sum((tt - q[:, :nh]) ** 2, axis=1) + (z - q[:, -1]) ** 2), z

    f, z = objective(t)
    for _ in range(12):
        grad_h = np.empty_like(t)
        hess_h = np.empty((t.shape[0], nh, nh))
        for a in range(nh):
            e = np.zeros(nh)
            e[a] = eps
            zp, zm = surface(t + e), surface(t - e)
            grad_h[:, a] = (zp - zm) / (2 * eps)
            hess_h[:, a, a] = (zp - 2 * z + zm) / eps ** 2
            for b in range(a):
                e2 = np.zeros(nh)
                e2[b] = eps
                mixed = (surface(t + e + e2) - surface(t + e - e2)
                         - surface(t - e + e2) + surface(t - e - e2)) / (4 * eps ** 2)
                hess_h[:, a, b] = hess_h[:, b, a] = mixed
        resid = z - q[:, -1]
        g = (t - q[:, :nh]) + resid[:, None] * grad_h
        H = (np.eye(nh)[None] + grad_h[:, :, None] * grad_h[:, None, :]
             + resid[:, None, None] * hess_h)
        det = np.linalg.det(H)
        ok = det > 1e-12
        step = -g.copy()
        if ok.any():
            step[ok] = -np.linalg.solve(H[ok], g[ok][..., None])[..., 0]
        step = np.clip(step, -step_cap, step_cap)
        t_new = np.clip(t + step, lo, hi)
        f_new, z_new = objective(t_new)
        better = f_new < f
        if not better.any():
            break
        t[better], f[better], z[better] = t_new[better], f_new[better], z_new[better]
    return np.minimum(np.sqrt(2 * f), dist)


FAR_AWAY = 1e300


def free_space_sdf(grid: CartesianGrid) -> SignedDistanceField:
    """An SDF with no surface anywhere near the grid (every node interior)."""
    return SignedDistanceField(grid, np.full(grid.shape, FAR_AWAY))


def sdf_from_dem(grid: CartesianGrid, dem, side: str = "below",
                 profile_y: float | None = None) -> SignedDistanceField:
    """Signed distance to the (bi)linear interpolant of a DEM raster.

    For 2D grids the DEM must be a single row or column, or ``profile_y``
    selects the northing of the east-west profile to extract.
    """
    from .dem import dem_surface

    surface, valid = dem_surface(dem, grid.ndims, profile_y)
    nh = grid.ndims - 1
    for (lo, hi), (vlo, vhi), h in zip(grid.extent()[:nh], valid, grid.spacing):
        tol = 1e-9 * h
        if lo < vlo - tol or hi > vhi + tol:
            raise GeometryError(
                f"DEM extent [{vlo}, {vhi}] does not cover grid extent [{lo}, {hi}]")
    bounds = [(max(vlo, lo - SAMPLE_MARGIN * h), min(vhi, hi + SAMPLE_MARGIN * h))
              for (lo, hi), (vlo, vhi), h in zip(grid.extent()[:nh], valid, grid.spacing)]
    dem.check_nodata(bounds, profile_y if grid.ndims == 2 else None)
    return sdf_from_function(grid, surface, side=side, sample_bounds=bounds)


# --------------------------------------------------------------------------

def locate_boundary_points(sdf: SignedDistanceField,
                           diagnostics: list | None = None) -> list[BoundaryPoint]:
    """Feet of the SDF normals that fall within each node's cell.

    A node hosts a boundary point when ``x - s * grad(s)/|grad(s)|`` lies in
    the node-centred box of half-width ``spacing/2``.  Degenerate gradients
    are skipped; their indices are appended to ``diagnostics`` if given.
    """
    grid = sdf.grid
    half = 0.5 * np.asarray(grid.spacing)
    halfdiag = float(np.linalg.norm(half))
    grads = np.stack(sdf.gradient(), axis=-1)
    cand = np.argwhere(np.abs(sdf.values) <= halfdiag)
    out: list[BoundaryPoint] = []
    for idx in cand:
        idx = tuple(int(i) for i in idx)
        g = grads[idx]
        gn = float(np.linalg.norm(g))
        if gn < 1e-8:
            log.warning("degenerate SDF gradient at node %s; skipped", idx)
            if diagnostics is not None:
                diagnostics.append(idx)
            continue
        n = g / gn
        x = grid.position(idx)
        xb = x - sdf.values[idx] * n
        if np.all(np.abs(xb - x) <= half * (1 + 1e-12)):
            out.append(BoundaryPoint(idx, xb, n))
    return out


def classify_points(sdf: SignedDistanceField, boundary_points: Sequence[BoundaryPoint],
                    eta: float) -> PointClassification:
    """Label nodes EXTERIOR (s < 0), ETA_EXCLUDED or INTERIOR.

    A non-exterior node is excluded when some boundary point lies strictly
    inside its box of half-width ``eta * spacing``; ``eta = 0`` excludes
    nothing.  ``boundary_points`` may come from a different (e.g. unstaggered)
    grid than ``sdf``.
    """
    if not 0 <= eta < 1:
        raise GeometryError(f"eta must lie in [0, 1), got {eta}")
    grid = sdf.grid
    labels = np.where(sdf.values < 0, Label.EXTERIOR, Label.INTERIOR).astype(np.int8)
    if eta > 0:
        h = np.asarray(grid.spacing)
        o = np.asarray(grid.origin)
        for bp in boundary_points:
            rel = (bp.position - o) / h
            lo = np.ceil(rel - eta).astype(int)
            hi = np.floor(rel + eta).astype(int)
            ranges = [range(max(a, 0), min(b, n - 1) + 1) for a, b, n in zip(lo, hi, grid.shape)]
            for idx in np.ndindex(*[len(r) for r in ranges]):
                node = tuple(r[i] for r, i in zip(ranges, idx))
                if labels[node] == Label.EXTERIOR:
                    continue
                if np.all(np.abs(bp.position - grid.position(node)) < eta * h):
                    labels[node] = Label.ETA_EXCLUDED
    return PointClassification(grid, labels)
