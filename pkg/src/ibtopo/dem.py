"""ESRI ASCII grid rasters (``.asc``) and their interpolated surfaces."""
from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import GeometryError

_REQUIRED = ("ncols", "nrows", "cellsize")


@dataclass
class DEM:
    ncols: int
    nrows: int
    xll: float  # lower-left cell corner
    yll: float
    cellsize: float
    nodata: float | None
    values: np.ndarray  # (nrows, ncols), first row is the northernmost

    def x_centres(self) -> np.ndarray:
        return self.xll + self.cellsize * (np.arange(self.ncols) + 0.5)

    def y_centres(self) -> np.ndarray:
        """Ascending northings; row ``-1 - i`` of ``values`` sits at entry ``i``."""
        return self.yll + self.cellsize * (np.arange(self.nrows) + 0.5)

    def south_up(self) -> np.ndarray:
        """Elevations indexed ``[x, y]`` with y ascending."""
        return self.values[::-1].T

    def nodata_mask(self) -> np.ndarray:
        if self.nodata is None:
            return np.zeros(self.values.shape, dtype=bool)
        return np.isclose(self.values, self.nodata) | ~np.isfinite(self.values)

    def check_nodata(self, bounds, profile_y=None) -> None:
        """Raise if any cell feeding the interpolant over ``bounds`` is NODATA."""
        mask = self.nodata_mask()[::-1].T  # [x, y]
        xc, yc = self.x_centres(), self.y_centres()

        def span(coords, lo, hi):
            i0 = max(int(np.searchsorted(coords, lo, side="right")) - 1, 0)
            i1 = min(int(np.searchsorted(coords, hi, side="left")), coords.size - 1)
            return slice(i0, i1 + 1)

        if self.nrows == 1:
            sub = mask[span(xc, *bounds[0]), :]
        elif self.ncols == 1:
            sub = mask[:, span(yc, *bounds[0])]
        elif len(bounds) == 1:
            sub = mask[span(xc, *bounds[0]), span(yc, profile_y, profile_y)]
        else:
            sub = mask[span(xc, *bounds[0]), span(yc, *bounds[1])]
        if sub.any():
            raise GeometryError("DEM contains NODATA cells inside the modelled extent")


def parse_esri_ascii(text: str) -> DEM:
    """Parse an ESRI ASCII grid from its text content."""
    lines = text.splitlines()
    header: dict[str, str] = {}
    body_start = 0
    for i, line in enumerate(lines):
        parts = line.split()
        if not parts:
            continue
        key = parts[0].lower()
        if key[0].isalpha():
            if len(parts) != 2:
                raise GeometryError(f"malformed header line: {line!r}")
            header[key] = parts[1]
            body_start = i + 1
        else:
            break
    for key in _REQUIRED:
        if key not in header:
            raise GeometryError(f"ESRI ASCII header missing {key!r}")
    ncols, nrows = int(header["ncols"]), int(header["nrows"])
    cellsize = float(header["cellsize"])
    if ncols < 1 or nrows < 1 or cellsize <= 0:
        raise GeometryError("ESRI ASCII header has non-positive dimensions")
    corner = {}
    for axis in ("x", "y"):
        if f"{axis}llcorner" in header:
            corner[axis] = float(header[f"{axis}llcorner"])
        elif f"{axis}llcenter" in header:
            corner[axis] = float(header[f"{axis}llcenter"]) - 0.5 * cellsize
        else:
            raise GeometryError(f"ESRI ASCII header missing {axis}llcorner")
    nodata = float(header["nodata_value"]) if "nodata_value" in header else None
    data = np.loadtxt(io.StringIO("\n".join(lines[body_start:])), dtype=np.float64, ndmin=1).ravel()
    if data.size != ncols * nrows:
        raise GeometryError(f"expected {ncols * nrows} elevations, found {data.size}")
    return DEM(ncols, nrows, corner["x"], corner["y"], cellsize, nodata, data.reshape(nrows, ncols))


def read_esri_ascii(path: str | Path) -> DEM:
    return parse_esri_ascii(Path(path).read_text())


def write_esri_ascii(path: str | Path, dem: DEM) -> None:
    rows = "\n".join(" ".join(repr(float(v)) for v in row) for row in dem.values)
    header = (f"ncols {dem.ncols}\nnrows {dem.nrows}\nxllcorner {dem.xll!r}\n"
              f"yllcorner {dem.yll!r}\ncellsize {dem.cellsize!r}\n")
    if dem.nodata is not None:
        header += f"NODATA_value {dem.nodata!r}\n"
    Path(path).write_text(header + rows + "\n")


def dem_surface(dem: DEM, ndims: int, profile_y: float | None = None):
    """Elevation function for a grid of ``ndims`` dims plus its valid extent.

    2D grids get a linear profile, 3D grids a bilinear surface; the valid
    extent is the hull of the cell centres.
    """
    xc, yc = dem.x_centres(), dem.y_centres()
    z = dem.south_up()
    if ndims == 2:
        if dem.nrows == 1:
            coords, prof = xc, z[:, 0]
        elif dem.ncols == 1:
            coords, prof = yc, z[0, :]
        elif profile_y is not None:
            if not yc[0] <= profile_y <= yc[-1]:
                raise GeometryError(f"profile_y={profile_y} outside DEM extent")
            coords = xc
            prof = RegularGridInterpolator((xc, yc), z)(
                np.column_stack([xc, np.full_like(xc, profile_y)]))
        else:
            raise GeometryError("2D grids need a single-row/column DEM or profile_y")
        if coords.size < 2:
            raise GeometryError("DEM profile needs at least two cells")

        def surface(xh):
            return np.interp(np.asarray(xh, float).reshape(-1), coords, prof)

        return surface, [(coords[0], coords[-1])]
    if ndims == 3:
        if dem.nrows < 2 or dem.ncols < 2:
            raise GeometryError("3D grids need a DEM with at least 2x2 cells")
        interp = RegularGridInterpolator((xc, yc), z, bounds_error=False, fill_value=None)

        def surface(xh):
            xh = np.atleast_2d(np.asarray(xh, float))
            return interp(np.column_stack([np.clip(xh[:, 0], xc[0], xc[-1]),
                                           np.clip(xh[:, 1], yc[0], yc[-1])]))

        return surface, [(xc[0], xc[-1]), (yc[0], yc[-1])]
    raise GeometryError("DEM surfaces need a 2D or 3D grid")
