"""JSON run configuration: parsing, validation and defaults.

Example document::

    {
      "grid": {"shape": [201, 201], "spacing": 5.0},
      "geometry": {"kind": "sine_hill", "base": 500.0, "amplitude": 100.0,
                   "wavelength": 1000.0, "centre": [500.0]},
      "equation": "acoustic2",
      "material": {"c": 350.0},
      "boundary": {"kind": "free", "order": 4},
      "source": {"f0": 4.0, "t0": 0.3, "location": [500.0, 250.0]},
      "time": {"duration": 1.5},
      "outputs": {"snapshot_stride": 50, "receivers": [{"location": [300.0, 300.0]}]}
    }

Geometry kinds are ``plane`` (``height`` plus ``angle`` in 2D or ``slope``),
``sine_hill``, ``arc``, ``dem`` (``path``, optional ``profile_y``) and
``none`` (no boundary).  ``side`` picks which side of the surface is the
domain (default ``below``).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .dem import read_esri_ascii
from .errors import ConfigError
from .geometry import (Arc, CartesianGrid, Plane, SignedDistanceField, SineHill, free_space_sdf,
                       sdf_from_dem, sdf_from_function)
from .solver import FORMULATIONS, Material, Receiver, RickerSource

GEOMETRY_KINDS = ("plane", "sine_hill", "arc", "dem", "none")

_MISSING = object()


@dataclass
class GridConfig:
    shape: tuple[int, ...]
    spacing: tuple[float, ...]
    origin: tuple[float, ...]

    def build(self) -> CartesianGrid:
        return CartesianGrid(self.shape, self.spacing, self.origin)


@dataclass
class BoundaryConfig:
    kind: str = "free"
    order: int = 4
    eta_pressure: float = 0.5
    eta_velocity: float = 0.0


@dataclass
class SourceConfig:
    f0: float
    t0: float
    location: tuple[float, ...]
    amplitude: float = 1.0

    def build(self) -> RickerSource:
        return RickerSource(self.f0, self.t0, self.location, self.amplitude)


@dataclass
class ConvergenceConfig:
    angle: float = 30.0
    wavelengths: float = 2.0
    periods: float = 1.0
    courant: float = 0.1
    norm: str = "linf"


@dataclass
class SimulationConfig:
    grid: GridConfig
    geometry: dict[str, Any]
    equation: str = "acoustic2"
    c: float | list = 1.0
    rho: float | list = 1.0
    boundary: BoundaryConfig = field(default_factory=BoundaryConfig)
    source: SourceConfig | None = None
    duration: float = 0.0
    courant: float = 0.5
    snapshot_stride: int = 1
    receivers: list[dict[str, Any]] = field(default_factory=list)
    output_dir: str = "out"
    convergence: ConvergenceConfig = field(default_factory=ConvergenceConfig)
    base_path: Path = field(default_factory=Path.cwd)

    @property
    def ndims(self) -> int:
        return len(self.grid.shape)

    def material(self) -> Material:
        return Material(np.asarray(self.c, float) if isinstance(self.c, list) else self.c,
                        np.asarray(self.rho, float) if isinstance(self.rho, list) else self.rho)

    def build_receivers(self) -> list[Receiver]:
        return [Receiver(tuple(r["location"]), r.get("field", "p")) for r in self.receivers]

    def sdf_factory(self) -> Callable[[CartesianGrid], SignedDistanceField]:
        """Return ``grid -> SDF`` so staggered subgrids are evaluated directly."""
        geo = self.geometry
        kind = geo["kind"]
        side = geo.get("side", "below")
        if kind == "none":
            return free_space_sdf
        if kind == "dem":
            path = Path(geo["path"])
            dem = read_esri_ascii(path if path.is_absolute() else self.base_path / path)
            return lambda g: sdf_from_dem(g, dem, side, geo.get("profile_y"))
        surface = self.surface()
        return lambda g: sdf_from_function(g, surface, side)

    def surface(self):
        geo = self.geometry
        kind = geo["kind"]
        nh = self.ndims - 1
        if kind == "plane":
            if "angle" in geo:
                if self.ndims != 2:
                    raise ConfigError("geometry.angle is only valid for 2D grids", "geometry.angle")
                anchor = geo.get("anchor", [0.0])
                return Plane.tilted((anchor[0], geo["height"]), geo["angle"])
            return Plane(geo["height"], tuple(geo.get("slope", [0.0] * nh)),
                         tuple(geo.get("anchor", [0.0] * nh)))
        if kind == "sine_hill":
            return SineHill(geo["base"], geo["amplitude"], geo["wavelength"],
                            tuple(geo.get("centre", [0.0] * nh)))
        if kind == "arc":
            return Arc(tuple(geo["centre"]), geo["radius"], geo.get("convex", True))
        raise ConfigError(f"geometry kind {kind!r} has no analytic surface", "geometry.kind")


def _get(doc: dict, path: str, default=_MISSING):
    node: Any = doc
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            if default is _MISSING:
                raise ConfigError(f"missing required key {path!r}", path)
            return default
        node = node[part]
    return node


def _number(doc, path, default=_MISSING, positive=False) -> float:
    v = _get(doc, path, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path} must be a number, got {v!r}", path)
    if positive and not v > 0:
        raise ConfigError(f"{path} must be positive, got {v!r}", path)
    return float(v)


def _int(doc, path, default=_MISSING) -> int:
    v = _get(doc, path, default)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path} must be an integer, got {v!r}", path)
    return v


def _vector(doc, path, length, default=_MISSING) -> tuple[float, ...]:
    v = _get(doc, path, default)
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        v = [v] * length
    if (not isinstance(v, list) or len(v) != length
            or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v)):
        raise ConfigError(f"{path} must be a list of {length} numbers, got {v!r}", path)
    return tuple(float(x) for x in v)


def _choice(doc, path, options, default=_MISSING) -> str:
    v = _get(doc, path, default)
    if v not in options:
        raise ConfigError(f"{path} must be one of {list(options)}, got {v!r}", path)
    return v


def _material_value(doc, path, default, shape):
    v = _get(doc, path, default)
    if isinstance(v, list):
        arr = np.asarray(v, dtype=float)
        if arr.shape != tuple(shape):
            raise ConfigError(f"{path} array must have shape {list(shape)}", path)
        if np.any(arr <= 0):
            raise ConfigError(f"{path} must be positive", path)
        return v
    return _number(doc, path, default, positive=True)


def parse_config(document: str | dict, base_path: str | Path | None = None) -> SimulationConfig:
    """Validate a JSON document (text or parsed) and fill in defaults."""
    if isinstance(document, str):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}", "document") from exc
    else:
        doc = document
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object", "document")

    shape = _get(doc, "grid.shape")
    if (not isinstance(shape, list) or not 1 <= len(shape) <= 3
            or not all(isinstance(n, int) and not isinstance(n, bool) and n >= 4 for n in shape)):
        raise ConfigError("grid.shape must be a list of 1-3 integers >= 4", "grid.shape")
    nd = len(shape)
    spacing = _vector(doc, "grid.spacing", nd)
    if min(spacing) <= 0:
        raise ConfigError("grid.spacing must be positive", "grid.spacing")
    grid = GridConfig(tuple(shape), spacing, _vector(doc, "grid.origin", nd, [0.0] * nd))

    geometry = _get(doc, "geometry")
    if not isinstance(geometry, dict):
        raise ConfigError("geometry must be an object", "geometry")
    _choice(doc, "geometry.kind", GEOMETRY_KINDS)
    _choice(doc, "geometry.side", ("below", "above"), "below")
    _check_geometry(doc, nd)

    boundary = BoundaryConfig(
        kind=_choice(doc, "boundary.kind", ("free", "rigid"), "free"),
        order=_int(doc, "boundary.order", 4),
        eta_pressure=_number(doc, "boundary.eta.pressure", 0.5),
        eta_velocity=_number(doc, "boundary.eta.velocity", 0.0),
    )
    if boundary.order < 2 or boundary.order % 2:
        raise ConfigError("boundary.order must be even and >= 2", "boundary.order")
    for key, eta in (("pressure", boundary.eta_pressure), ("velocity", boundary.eta_velocity)):
        if not 0.0 <= eta < 1.0:
            raise ConfigError(f"boundary.eta.{key} must lie in [0, 1)", f"boundary.eta.{key}")

    source = None
    if _get(doc, "source", None) is not None:
        source = SourceConfig(_number(doc, "source.f0", positive=True), _number(doc, "source.t0", 0.0),
                              _vector(doc, "source.location", nd), _number(doc, "source.amplitude", 1.0))

    duration = _number(doc, "time.duration", 0.0)
    if duration < 0:
        raise ConfigError("time.duration must be non-negative", "time.duration")
    courant = _number(doc, "time.courant", 0.5)
    if not 0.0 < courant <= 1.0:
        raise ConfigError(f"time.courant must lie in (0, 1], got {courant}", "time.courant")
    stride = _int(doc, "outputs.snapshot_stride", 1)
    if stride < 1:
        raise ConfigError("outputs.snapshot_stride must be >= 1", "outputs.snapshot_stride")
    receivers = _get(doc, "outputs.receivers", [])
    if not isinstance(receivers, list):
        raise ConfigError("outputs.receivers must be a list", "outputs.receivers")
    for i, rec in enumerate(receivers):
        if not isinstance(rec, dict):
            raise ConfigError("each receiver must be an object", f"outputs.receivers[{i}]")
        _vector(rec, "location", nd)
        _choice(rec, "field", ("p", "vx", "vy", "vz")[:nd + 1], "p")

    conv = ConvergenceConfig(
        angle=_number(doc, "convergence.angle", 30.0),
        wavelengths=_number(doc, "convergence.wavelengths", 2.0, positive=True),
        periods=_number(doc, "convergence.periods", 1.0, positive=True),
        courant=_number(doc, "convergence.courant", 0.1),
        norm=_choice(doc, "convergence.norm", ("linf", "l2"), "linf"),
    )
    if not 0.0 < conv.courant <= 1.0:
        raise ConfigError("convergence.courant must lie in (0, 1]", "convergence.courant")

    out_dir = _get(doc, "outputs.directory", "out")
    if not isinstance(out_dir, str):
        raise ConfigError("outputs.directory must be a string", "outputs.directory")
    return SimulationConfig(
        grid=grid,
        geometry=dict(geometry),
        equation=_choice(doc, "equation", FORMULATIONS, "acoustic2"),
        c=_material_value(doc, "material.c", 1.0, shape),
        rho=_material_value(doc, "material.rho", 1.0, shape),
        boundary=boundary,
        source=source,
        duration=duration,
        courant=courant,
        snapshot_stride=stride,
        receivers=receivers,
        output_dir=out_dir,
        convergence=conv,
        base_path=Path(base_path) if base_path is not None else Path.cwd(),
    )


def _check_geometry(doc: dict, nd: int) -> None:
    kind = doc["geometry"]["kind"]
    nh = nd - 1
    if kind == "plane":
        _number(doc, "geometry.height")
        if "angle" in doc["geometry"]:
            _number(doc, "geometry.angle")
        else:
            _vector(doc, "geometry.slope", nh, [0.0] * nh)
        _vector(doc, "geometry.anchor", max(nh, 1), [0.0] * max(nh, 1))
    elif kind == "sine_hill":
        _number(doc, "geometry.base")
        _number(doc, "geometry.amplitude")
        _number(doc, "geometry.wavelength", positive=True)
        _vector(doc, "geometry.centre", nh, [0.0] * nh)
    elif kind == "arc":
        _vector(doc, "geometry.centre", nd)
        _number(doc, "geometry.radius", positive=True)
    elif kind == "dem":
        path = _get(doc, "geometry.path")
        if not isinstance(path, str):
            raise ConfigError("geometry.path must be a string", "geometry.path")
        if "profile_y" in doc["geometry"]:
            _number(doc, "geometry.profile_y")


def load_config(path: str | Path) -> SimulationConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}", "config") from exc
    return parse_config(text, base_path=path.parent)
