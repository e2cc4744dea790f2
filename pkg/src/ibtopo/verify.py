"""Analytic standing waves, error norms and convergence-rate estimation."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, IBError
from .geometry import CartesianGrid, Label, PointClassification, Plane, sdf_from_function
from .solver import (VELOCITY_NAMES, FieldState, Material, build_domain, build_operators,
                     check_finite, critical_dt, step)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AnalyticStandingWave:
    """``p = sin(k d) cos(w t)`` with ``d = n . (x - x_s)`` the distance into the domain.

    With ``kind="rigid"`` the profile is ``cos(k d)``, which satisfies the
    rigid family instead of the free one.
    """

    normal: tuple[float, ...]
    surface_point: tuple[float, ...]
    k: float
    c: float = 1.0
    kind: str = "free"

    def __post_init__(self):
        n = np.asarray(self.normal, float)
        if not np.isclose(np.linalg.norm(n), 1.0, atol=1e-12):
            raise ConfigError("standing-wave normal must be a unit vector", "normal")
        if self.kind not in ("free", "rigid"):
            raise ConfigError(f"unknown standing-wave kind {self.kind!r}", "kind")

    @property
    def omega(self) -> float:
        return self.c * self.k

    def distance(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        return (x - np.asarray(self.surface_point, float)) @ np.asarray(self.normal, float)

    def _profiles(self, d):
        kd = self.k * d
        if self.kind == "free":
            return np.sin(kd), np.cos(kd)
        return np.cos(kd), -np.sin(kd)


def standing_wave_fields(sw: AnalyticStandingWave, x, t: float, rho: float = 1.0,
                         t_velocity: float | None = None):
    """Exact ``(p, v)`` at positions ``x`` (shape ``(..., ndims)``).

    ``v = (k / (rho w)) n cos(k d) sin(w t)`` solves ``v_t = grad p / rho``.
    ``t_velocity`` evaluates ``v`` at a different time (staggered schemes).
    """
    tv = t if t_velocity is None else t_velocity
    shape, dprof = sw._profiles(sw.distance(x))
    p = shape * np.cos(sw.omega * t)
    amp = sw.k / (rho * sw.omega) * dprof * np.sin(sw.omega * tv)
    v = amp[..., None] * np.asarray(sw.normal, float)
    return p, v


def discrete_frequency(sw: AnalyticStandingWave, dt: float) -> float:
    """Frequency seen by leapfrog with an exact spatial operator.

    ``cos(w dt) = 1 - (c k dt)^2 / 2``; the same relation holds for the
    staggered scheme.
    """
    arg = 1.0 - 0.5 * (sw.c * sw.k * dt) ** 2
    if not -1.0 <= arg <= 1.0:
        raise ConfigError("time step too large for the standing-wave reference", "dt")
    return float(np.arccos(arg)) / dt


def discrete_standing_wave(sw: AnalyticStandingWave, x, t: float, dt: float, rho: float = 1.0,
                           t_velocity: float | None = None):
    """Time-discrete counterpart of :func:`standing_wave_fields`.

    The result is what leapfrog would produce with exact spatial derivatives,
    so the remaining numerical error is purely spatial.
    """
    tv = t if t_velocity is None else t_velocity
    w = discrete_frequency(sw, dt)
    shape, dprof = sw._profiles(sw.distance(x))
    p = shape * np.cos(w * t)
    amp = dt * sw.k / (2.0 * rho * np.sin(0.5 * w * dt)) * dprof * np.sin(w * tv)
    return p, amp[..., None] * np.asarray(sw.normal, float)


def error_norm(numerical: np.ndarray, analytic: np.ndarray, classification: PointClassification,
               kind: str = "linf") -> float:
    """Error over INTERIOR nodes: ``linf`` max or ``l2`` root-mean-square."""
    mask = classification.labels == Label.INTERIOR
    diff = np.abs(np.asarray(numerical) - np.asarray(analytic))[mask]
    if diff.size == 0:
        return 0.0
    if kind == "linf":
        return float(diff.max())
    if kind == "l2":
        return float(np.sqrt(np.mean(diff ** 2)))
    raise ConfigError(f"unknown norm {kind!r}", "norm")


def fit_slope(h: Sequence[float], err: Sequence[float]) -> float:
    """Least-squares slope of ``log err`` against ``log h``."""
    h = np.asarray(h, float)
    err = np.asarray(err, float)
    if h.size < 2:
        raise ConfigError("need at least two resolutions to fit a slope", "resolutions")
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


@dataclass
class ConvergenceReport:
    formulation: str
    norm: str
    h: list[float] = field(default_factory=list)
    errors: list[float] = field(default_factory=list)
    failures: dict[float, str] = field(default_factory=dict)
    slope: float = float("nan")

    def table(self) -> str:
        lines = [f"# {self.formulation} convergence ({self.norm} over interior nodes)",
                 f"{'h':>14} {'error':>14} {'rate':>8}"]
        for i, (h, e) in enumerate(zip(self.h, self.errors)):
            rate = "" if i == 0 else f"{np.log(self.errors[i - 1] / e) / np.log(self.h[i - 1] / h):8.3f}"
            lines.append(f"{h:14.6e} {e:14.6e} {rate:>8}")
        for h, msg in self.failures.items():
            lines.append(f"{h:14.6e} {'failed':>14}  {msg}")
        lines.append(f"fitted slope: {self.slope:.4f}")
        return "\n".join(lines)

    def record(self) -> dict:
        return {"formulation": self.formulation, "norm": self.norm, "h": self.h,
                "errors": self.errors, "slope": self.slope,
                "failures": {repr(h): m for h, m in self.failures.items()}}

    @property
    def monotone(self) -> bool:
        return all(b < a for a, b in zip(self.errors, self.errors[1:]))


@dataclass(frozen=True)
class ConvergenceSetup:
    """Tilted-plane standing wave in a square box of ``wavelengths`` wavelengths."""

    angle: float = 30.0
    wavelengths: float = 2.0
    wavelength: float = 1.0
    c: float = 1.0
    rho: float = 1.0
    periods: float = 1.0
    kind: str = "free"
    order_m: int = 4
    eta_pressure: float = 0.5
    eta_velocity: float = 0.0
    discrete_time: bool = True
    surface_offset: float = 0.0  # vertical shift of the plane from the box centre

    def surface(self) -> Plane:
        mid = 0.5 * self.wavelengths * self.wavelength
        return Plane.tilted((mid, mid + self.surface_offset), self.angle)

    def standing_wave(self) -> AnalyticStandingWave:
        mid = 0.5 * self.wavelengths * self.wavelength
        # interior lies below the plane; the inward normal points down-slope
        a = np.deg2rad(self.angle)
        normal = (np.sin(a), -np.cos(a))
        return AnalyticStandingWave(normal, (mid, mid + self.surface_offset), 2 * np.pi / self.wavelength,
                                    self.c, self.kind)


def run_convergence(formulation: str, resolutions: Sequence[float], courant_fraction: float = 0.1,
                    setup: ConvergenceSetup | None = None, norm: str = "linf") -> ConvergenceReport:
    """Run the standing-wave test at each grid increment and fit the slope."""
    setup = setup or ConvergenceSetup()
    res = sorted((float(h) for h in resolutions), reverse=True)
    if len(res) < 3:
        raise ConfigError("convergence needs at least three resolutions", "resolutions")
    if len(set(res)) != len(res):
        raise ConfigError("resolutions must be distinct", "resolutions")
    report = ConvergenceReport(formulation, norm)
    for h in res:
        t0 = time.perf_counter()
        try:
            err = _single_run(formulation, h, courant_fraction, setup, norm)
        except IBError as exc:
            log.warning("resolution h=%g failed: %s", h, exc)
            report.failures[h] = str(exc)
            continue
        log.info("h=%g error=%.3e (%.1fs)", h, err, time.perf_counter() - t0)
        report.h.append(h)
        report.errors.append(err)
    if len(report.h) >= 2:
        report.slope = fit_slope(report.h, report.errors)
    return report


def _single_run(formulation: str, h: float, courant_fraction: float, setup: ConvergenceSetup,
                norm: str) -> float:
    length = setup.wavelengths * setup.wavelength
    n = int(round(length / h)) + 1
    grid = CartesianGrid((n, n), (h, h))
    surface = setup.surface()
    domain = build_domain(grid, lambda g: sdf_from_function(g, surface), formulation,
                          setup.eta_pressure, setup.eta_velocity)
    ops = build_operators(domain, setup.kind, setup.order_m)
    material = Material(setup.c, setup.rho)
    dt_max = courant_fraction * critical_dt(grid, material, setup.order_m, formulation)
    t_end = setup.periods * setup.wavelength / setup.c
    nsteps = int(np.ceil(t_end / dt_max))
    dt = t_end / nsteps
    sw = setup.standing_wave()

    def exact(name, t):
        fg = domain.fields[name]
        x = fg.grid.nodes()
        if name == "p":
            if setup.discrete_time:
                return discrete_standing_wave(sw, x, t, dt, setup.rho)[0]
            return standing_wave_fields(sw, x, t, setup.rho)[0]
        axis = VELOCITY_NAMES.index(name)
        if setup.discrete_time:
            return discrete_standing_wave(sw, x, t, dt, setup.rho)[1][..., axis]
        return standing_wave_fields(sw, x, t, setup.rho)[1][..., axis]

    def masked(name, values):
        return np.where(domain.fields[name].classification.labels == Label.EXTERIOR, 0.0, values)

    if formulation == "acoustic2":
        state = FieldState({"p": masked("p", exact("p", 0.0))}, {"p": masked("p", exact("p", -dt))})
    else:
        vals = {"p": masked("p", exact("p", 0.0))}
        for a in range(grid.ndims):
            vn = VELOCITY_NAMES[a]
            vals[vn] = masked(vn, exact(vn, -0.5 * dt))
        state = FieldState(vals)
    for _ in range(nsteps):
        state = step(state, ops, material, dt, (), exact)
    check_finite(state, force=True)
    return error_norm(state.values["p"], exact("p", state.time), domain.fields["p"].classification, norm)
