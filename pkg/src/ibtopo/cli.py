"""Command-line front end: ``run``, ``converge``, ``stencil-dump`` and ``sdf``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import SimulationConfig, load_config
from .errors import ConfigError, IBError
from .geometry import sdf_from_dem
from .dem import read_esri_ascii
from .io import stencil_record, write_snapshot, write_stencil_dump, write_trace
from .solver import (Domain, Operators, build_domain, build_operators, critical_dt, run,
                     zero_state)
from .stencils import DerivativeSpec
from .verify import ConvergenceSetup, run_convergence

log = logging.getLogger("ibtopo")


def operator_name(spec: DerivativeSpec) -> str:
    """``d2p/dx2`` style label; staggered first derivatives get ``@+0.5``."""
    axis = "xyz"[spec.axis]
    k = spec.order
    name = f"d{spec.field}/d{axis}" if k == 1 else f"d{k}{spec.field}/d{axis}{k}"
    stag = spec.stagger[spec.axis]
    return name + (f"@{stag:+g}" if stag else "")


def _output_dir(path: str | Path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}", "outputs.directory") from exc
    return out


def setup_operators(cfg: SimulationConfig) -> tuple[Domain, Operators]:
    grid = cfg.grid.build()
    b = cfg.boundary
    domain = build_domain(grid, cfg.sdf_factory(), cfg.equation, b.eta_pressure, b.eta_velocity)
    ops = build_operators(domain, b.kind, b.order)
    nmod = sum(st.modified for table in ops.tables.values() for st in table.values())
    log.info("%d boundary points, %d modified stencils", len(domain.boundary_points), nmod)
    return domain, ops


def cmd_run(cfg: SimulationConfig, out_dir: Path) -> int:
    if cfg.duration <= 0:
        raise ConfigError("time.duration must be positive for a run", "time.duration")
    out = _output_dir(out_dir)
    domain, ops = setup_operators(cfg)
    material = cfg.material()
    dt_crit = critical_dt(domain.grid, material, cfg.boundary.order, cfg.equation)
    nsteps = int(np.ceil(cfg.duration / (cfg.courant * dt_crit)))
    dt = cfg.duration / nsteps
    log.info("dt=%.6g (critical %.6g), %d steps", dt, dt_crit, nsteps)
    sources = [cfg.source.build()] if cfg.source else []
    receivers = cfg.build_receivers()
    snap_dir = out / "snapshots"
    snap_dir.mkdir(exist_ok=True)

    def snapshot(state):
        if state.step % cfg.snapshot_stride:
            return
        for name, fg in domain.fields.items():
            write_snapshot(snap_dir / f"{name}_{state.step:06d}.snap", state.values[name], fg.grid,
                           name, state.time)

    state = zero_state(domain)
    snapshot(state)
    state = run(state, ops, material, dt, nsteps, sources, receivers, callback=snapshot)
    for i, rec in enumerate(receivers):
        write_trace(out / f"trace_{i:03d}_{rec.field}.csv", rec.times, rec.trace)
    summary = {"equation": cfg.equation, "dt": dt, "steps": nsteps, "final_time": state.time,
               "boundary_points": len(domain.boundary_points)}
    (out / "run.json").write_text(json.dumps(summary, indent=1) + "\n")
    return 0


def cmd_converge(cfg: SimulationConfig, resolutions: list[float], out_dir: Path) -> int:
    out = _output_dir(out_dir)
    c = cfg.convergence
    if isinstance(cfg.c, list) or isinstance(cfg.rho, list):
        raise ConfigError("convergence runs need constant material", "material")
    setup = ConvergenceSetup(angle=c.angle, wavelengths=c.wavelengths, periods=c.periods,
                             c=cfg.c, rho=cfg.rho, kind=cfg.boundary.kind,
                             order_m=cfg.boundary.order, eta_pressure=cfg.boundary.eta_pressure,
                             eta_velocity=cfg.boundary.eta_velocity)
    report = run_convergence(cfg.equation, resolutions, c.courant, setup, c.norm)
    text = report.table()
    print(text)
    (out / "convergence.txt").write_text(text + "\n")
    (out / "convergence.json").write_text(json.dumps(report.record(), indent=1) + "\n")
    return 0 if len(report.h) >= 2 else 1


def cmd_stencil_dump(cfg: SimulationConfig, points: list[tuple[int, ...]], out_dir: Path) -> int:
    out = _output_dir(out_dir)
    domain, ops = setup_operators(cfg)
    records = []
    for pt in points:
        if len(pt) != domain.ndims:
            raise ConfigError(f"point {pt} does not have {domain.ndims} indices", "points")
        found = False
        for spec, table in ops.tables.items():
            st = table.get(tuple(pt))
            if st is not None:
                records.append(stencil_record(st, operator_name(spec)))
                found = True
        if not found:
            raise ConfigError(f"no stencil at point {pt} (exterior or outer frame)", "points")
    write_stencil_dump(out / "stencils.json", records)
    return 0


def cmd_sdf(cfg: SimulationConfig, out_dir: Path, dem_path: str | None = None) -> int:
    out = _output_dir(out_dir)
    grid = cfg.grid.build()
    if dem_path is not None:
        dem = read_esri_ascii(dem_path)
        sdf = sdf_from_dem(grid, dem, cfg.geometry.get("side", "below"), cfg.geometry.get("profile_y"))
    else:
        sdf = cfg.sdf_factory()(grid)
    write_snapshot(out / "sdf.snap", sdf.values, grid, "sdf", 0.0)
    return 0


def _parse_resolutions(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad resolution list {text!r}")


def _parse_points(text: str) -> list[tuple[int, ...]]:
    try:
        return [tuple(int(v) for v in chunk.split(",")) for chunk in text.split(";") if chunk.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad point list {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ibtopo", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--out", default=None, help="output directory (default: outputs.directory)")

    common(sub.add_parser("run", help="time-domain simulation"))
    p = sub.add_parser("converge", help="standing-wave convergence study")
    common(p)
    p.add_argument("--resolutions", type=_parse_resolutions, required=True, help="h1,h2,...")
    p = sub.add_parser("stencil-dump", help="dump stencil tables at grid indices")
    common(p)
    p.add_argument("--points", type=_parse_points, required=True, help="i,j[,k];...")
    p = sub.add_parser("sdf", help="write the signed distance field as a snapshot")
    common(p)
    p.add_argument("--dem", default=None, help="ESRI ASCII DEM (overrides the config geometry)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        out = Path(args.out) if args.out else cfg.base_path / cfg.output_dir
        if args.command == "run":
            return cmd_run(cfg, out)
        if args.command == "converge":
            return cmd_converge(cfg, args.resolutions, out)
        if args.command == "stencil-dump":
            return cmd_stencil_dump(cfg, args.points, out)
        return cmd_sdf(cfg, out, args.dem)
    except (IBError, OSError) as exc:
        print(f"ibtopo: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
