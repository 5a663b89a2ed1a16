"""Uniform cell grids and cell-averaged probability densities.

A :class:`Grid` covers a truncated box in one or two dimensions.  A
:class:`Density` stores one nonnegative value per cell and always carries
unit mass with respect to the cell volume.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

#: floor applied inside logarithms only, never to stored values
MASS_FLOOR = 1e-12
MASS_TOL = 1e-10


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centred grid on ``[lower, upper]`` per axis.

    Parameters
    ----------
    lower, upper : sequence of float
        Box bounds, one entry per axis.
    n : sequence of int
        Number of cells per axis (at least 4).
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    n: tuple[int, ...]

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        n = tuple(int(v) for v in np.atleast_1d(self.n))
        if not (len(lower) == len(upper) == len(n)) or len(n) not in (1, 2):
            raise ValueError("grid must be 1D or 2D with matching bounds and cell counts")
        for lo, hi, k in zip(lower, upper, n):
            if not hi > lo:
                raise ValueError(f"upper bound {hi} must exceed lower bound {lo}")
            if k < 4:
                raise ValueError(f"need at least 4 cells per axis, got {k}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "n", n)

    @classmethod
    def uniform(cls, lower: float, upper: float, n: int) -> "Grid":
        return cls((lower,), (upper,), (n,))

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def widths(self) -> tuple[float, ...]:
        return tuple((hi - lo) / k for lo, hi, k in zip(self.lower, self.upper, self.n))

    @property
    def dz(self) -> float:
        """Cell width of a 1D grid (smallest width in 2D)."""
        return min(self.widths)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.widths))

    def axis_centers(self, axis: int = 0) -> np.ndarray:
        lo, h, k = self.lower[axis], self.widths[axis], self.n[axis]
        return lo + (np.arange(k) + 0.5) * h

    def axis_faces(self, axis: int = 0) -> np.ndarray:
        lo, h, k = self.lower[axis], self.widths[axis], self.n[axis]
        return lo + np.arange(k + 1) * h

    @property
    def centers(self) -> np.ndarray:
        """Cell centres; shape ``(n,)`` in 1D and ``(n1, n2)`` per axis stacked in 2D."""
        if self.dim == 1:
            return self.axis_centers(0)
        return np.stack(np.meshgrid(self.axis_centers(0), self.axis_centers(1), indexing="ij"))

    @property
    def points(self) -> np.ndarray:
        """Cell centres as an array of shape ``grid.shape + (dim,)``."""
        if self.dim == 1:
            return self.axis_centers(0)[:, None]
        return np.moveaxis(self.centers, 0, -1)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(values) * self.cell_volume)


@dataclass(frozen=True, eq=False)
class Density:
    """Cell-averaged probability density on a grid.

    Values are validated to be finite, nonnegative and of unit mass.  With
    ``normalize=True`` the values are rescaled to unit mass first.
    """

    grid: Grid
    values: np.ndarray
    normalize: bool = field(default=False, repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(self.grid.shape)
        if not np.all(np.isfinite(vals)):
            raise ValueError("density has non-finite values")
        if np.any(vals < 0):
            raise ValueError(f"density has negative values (min {vals.min():.3e})")
        mass = float(np.sum(vals)) * self.grid.cell_volume
        if self.normalize:
            if mass <= 0:
                raise ValueError("empty density")
            vals = vals / mass
        elif abs(mass - 1.0) > MASS_TOL:
            raise ValueError(f"density mass {mass!r} differs from 1")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "normalize", False)

    @property
    def mass(self) -> float:
        return self.grid.integrate(self.values)

    def log(self, floor: float = MASS_FLOOR) -> np.ndarray:
        return np.log(np.maximum(self.values, floor))

    def with_values(self, values: np.ndarray) -> "Density":
        return Density(self.grid, values)

    def _check_partner(self, other: "Density"):
        if other.grid != self.grid:
            raise ValueError("densities live on different grids")


def discretize(pdf: Callable[[np.ndarray], np.ndarray], grid: Grid) -> Density:
    """Midpoint-rule cell averages of ``pdf``, renormalized to unit mass.

    ``pdf`` receives the cell centres (``grid.centers``) and must return one
    nonnegative value per cell.
    """
    vals = np.asarray(pdf(grid.centers), dtype=float)
    vals = np.broadcast_to(vals, grid.shape)
    if np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise ValueError("pdf must be finite and nonnegative on the grid")
    if not np.any(vals > 0):
        raise ValueError("empty density")
    return Density(grid, vals, normalize=True)


def gaussian_logpdf(points: np.ndarray, mean: Sequence[float], var: Sequence[float]) -> np.ndarray:
    """Log of a diagonal Gaussian evaluated at ``points`` of shape ``(..., d)``."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    var = np.atleast_1d(np.asarray(var, dtype=float))
    r = (points - mean) ** 2 / var
    return -0.5 * np.sum(r + np.log(2 * np.pi * var), axis=-1)


def discretize_log(logpdf: np.ndarray, grid: Grid) -> Density:
    """Density from log-values at the cell centres, normalized stably."""
    logpdf = np.asarray(logpdf, dtype=float).reshape(grid.shape)
    shift = np.max(logpdf)
    return Density(grid, np.exp(logpdf - shift), normalize=True)


def gaussian_density(grid: Grid, mean, var) -> Density:
    return discretize_log(gaussian_logpdf(grid.points, mean, var), grid)


def moment(rho: Density, k: int):
    """Raw moment ``sum z**k rho dV``; per-axis vector in 2D."""
    if not 0 <= k <= 4:
        raise ValueError("moment order must be in 0..4")
    g = rho.grid
    if g.dim == 1:
        return float(np.sum(g.axis_centers(0) ** k * rho.values) * g.cell_volume)
    pts = g.points
    return np.array([np.sum(pts[..., a] ** k * rho.values) * g.cell_volume for a in range(g.dim)])


def cdf_1d(rho: Density) -> np.ndarray:
    """CDF at the faces of a 1D grid (length n+1, starting at 0)."""
    if rho.grid.dim != 1:
        raise ValueError("cdf_1d requires a 1D density")
    c = np.concatenate([[0.0], np.cumsum(rho.values) * rho.grid.cell_volume])
    return c / c[-1]


def sample(rho: Density, count: int, seed: int) -> np.ndarray:
    """Draw ``count`` points from the piecewise-constant density.

    Cells are picked by inverse CDF, positions are uniform within the cell.
    Returns shape ``(count,)`` in 1D and ``(count, 2)`` in 2D.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = np.random.default_rng(seed)
    g = rho.grid
    p = rho.values.ravel() * g.cell_volume
    cum = np.cumsum(p)
    cum /= cum[-1]
    u = rng.random(count)
    idx = np.minimum(np.searchsorted(cum, u, side="right"), cum.size - 1)
    offsets = rng.random((count, g.dim))
    cells = np.unravel_index(idx, g.shape)
    out = np.empty((count, g.dim))
    for a in range(g.dim):
        out[:, a] = g.lower[a] + (cells[a] + offsets[:, a]) * g.widths[a]
    return out[:, 0] if g.dim == 1 else out


def write_csv(rho: Density, path) -> None:
    """Write ``z,rho`` (1D) or ``z1,z2,rho`` (2D) with a header row."""
    g = rho.grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if g.dim == 1:
            w.writerow(["z", "rho"])
            for z, r in zip(g.axis_centers(0), rho.values):
                w.writerow([repr(float(z)), repr(float(r))])
        else:
            w.writerow(["z1", "z2", "rho"])
            pts = g.points.reshape(-1, 2)
            for (z1, z2), r in zip(pts, rho.values.ravel()):
                w.writerow([repr(float(z1)), repr(float(z2)), repr(float(r))])


def read_csv(path, grid: Grid) -> Density:
    """Read a snapshot written by :func:`write_csv` onto ``grid``.

    The file's cell centres must coincide with the grid centres.  Values
    with unit mass are kept exactly; others are renormalized.
    """
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    expected = ["z", "rho"] if grid.dim == 1 else ["z1", "z2", "rho"]
    if [h.strip() for h in header] != expected:
        raise ValueError(f"{path}: expected header {expected}, got {header}")
    data = np.array(body, dtype=float)
    if data.shape[0] != int(np.prod(grid.shape)):
        raise ValueError(f"{path}: {data.shape[0]} rows but grid has {np.prod(grid.shape)} cells")
    coords = data[:, :-1]
    if not np.allclose(coords, grid.points.reshape(-1, grid.dim), atol=1e-9 * max(1.0, np.max(np.abs(coords)))):
        raise ValueError(f"{path}: cell centres do not match the grid")
    vals = data[:, -1].reshape(grid.shape)
    # keep the stored values bit-exact unless they need renormalizing
    exact = abs(float(np.sum(vals)) * grid.cell_volume - 1.0) <= MASS_TOL
    return Density(grid, vals, normalize=not exact)
