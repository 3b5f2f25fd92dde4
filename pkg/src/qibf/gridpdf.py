"""Discretized probability densities on uniform grids.

The numerical substrate for the grid-based receivers: nonnegative values
sampled on a uniform 1-D or 2-D grid, with trapezoidal quadrature for mass,
moments, and marginals.  Densities are immutable; every operation returns a
new object.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDensityError

__all__ = [
    "UniformGrid",
    "GridDensity",
    "trapezoid_mass",
    "normalize",
    "mean_cov",
    "marginal",
    "gaussian_density",
    "default_grid",
    "density_to_csv",
]


@dataclass(frozen=True)
class UniformGrid:
    """Axis-aligned uniform grid with one or two axes.

    Parameters
    ----------
    lower, upper : tuple of float
        Per-axis bounds, lower[i] < upper[i].
    count : tuple of int
        Points per axis, at least 3.
    """

    lower: tuple
    upper: tuple
    count: tuple

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        count = tuple(int(v) for v in np.atleast_1d(self.count))
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "count", count)
        if not (len(lower) == len(upper) == len(count)):
            raise ValueError("lower, upper, count must have equal length")
        if len(count) not in (1, 2):
            raise ValueError(f"only 1-D and 2-D grids are supported, got {len(count)} axes")
        for lo, hi, n in zip(lower, upper, count):
            if not lo < hi:
                raise ValueError(f"grid bounds must satisfy lower < upper, got [{lo}, {hi}]")
            if n < 3:
                raise ValueError(f"grid needs at least 3 points per axis, got {n}")

    @property
    def ndim(self):
        return len(self.count)

    @property
    def shape(self):
        return self.count

    @property
    def spacing(self):
        return tuple(
            (hi - lo) / (n - 1) for lo, hi, n in zip(self.lower, self.upper, self.count)
        )

    def axis(self, i: int) -> np.ndarray:
        return np.linspace(self.lower[i], self.upper[i], self.count[i])

    def trapezoid_weights(self, i: int) -> np.ndarray:
        h = self.spacing[i]
        w = np.full(self.count[i], h)
        w[0] = w[-1] = 0.5 * h
        return w


@dataclass(frozen=True)
class GridDensity:
    """Nonnegative values on a :class:`UniformGrid`."""

    grid: UniformGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {values.shape} does not match grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("density values must be finite")
        if np.any(values < 0.0):
            raise ValueError("density values must be nonnegative")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


def _weight_grid(grid: UniformGrid) -> np.ndarray:
    if grid.ndim == 1:
        return grid.trapezoid_weights(0)
    return np.outer(grid.trapezoid_weights(0), grid.trapezoid_weights(1))


def trapezoid_mass(d: GridDensity) -> float:
    """Tensor-product trapezoidal quadrature of the density over its grid."""
    return float(np.sum(_weight_grid(d.grid) * d.values))


def normalize(d: GridDensity) -> GridDensity:
    """Scale values so the trapezoidal mass is one.

    Raises
    ------
    DegenerateDensityError
        If the mass is zero or not finite: the update annihilated the
        support, typically because the grid is too narrow.
    """
    mass = trapezoid_mass(d)
    if not np.isfinite(mass) or mass <= 0.0:
        raise DegenerateDensityError(
            f"cannot normalize density with mass {mass}; widen the grid", mass=mass
        )
    return GridDensity(d.grid, d.values / mass)


def mean_cov(d: GridDensity):
    """Trapezoidal first moment and second central moment.

    Returns
    -------
    mean : ndarray, shape (ndim,)
    cov : ndarray, shape (ndim, ndim)
    """
    w = _weight_grid(d.grid)
    mass = float(np.sum(w * d.values))
    if not np.isfinite(mass) or mass <= 0.0:
        raise DegenerateDensityError(
            f"cannot take moments of density with mass {mass}", mass=mass
        )
    p = w * d.values / mass
    if d.grid.ndim == 1:
        x = d.grid.axis(0)
        m = float(np.sum(p * x))
        v = float(np.sum(p * (x - m) ** 2))
        return np.array([m]), np.array([[v]])
    x = d.grid.axis(0)[:, None]
    y = d.grid.axis(1)[None, :]
    mx = float(np.sum(p * x))
    my = float(np.sum(p * y))
    dx = x - mx
    dy = y - my
    cxx = float(np.sum(p * dx * dx))
    cyy = float(np.sum(p * dy * dy))
    cxy = float(np.sum(p * dx * dy))
    return np.array([mx, my]), np.array([[cxx, cxy], [cxy, cyy]])


def marginal(d: GridDensity, axis: int) -> GridDensity:
    """Marginal on `axis` of a 2-D density: trapezoid-integrate out the other axis."""
    if d.grid.ndim != 2:
        raise ValueError("marginal is defined for 2-D densities only")
    if axis not in (0, 1):
        raise ValueError(f"axis must be 0 or 1, got {axis}")
    other = 1 - axis
    w = d.grid.trapezoid_weights(other)
    vals = np.tensordot(d.values, w, axes=([other], [0]))
    g = UniformGrid((d.grid.lower[axis],), (d.grid.upper[axis],), (d.grid.count[axis],))
    return GridDensity(g, vals)


def gaussian_density(grid: UniformGrid, mean, cov) -> GridDensity:
    """Evaluate a (nondegenerate) Gaussian pdf at the grid nodes.

    `cov` is a variance for 1-D grids and a 2x2 covariance for 2-D grids.
    The result is not renormalized; callers wanting unit trapezoidal mass
    should apply :func:`normalize`.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    if grid.ndim == 1:
        var = float(np.asarray(cov).reshape(-1)[0])
        if var <= 0.0:
            raise ValueError(f"variance must be positive, got {var}")
        x = grid.axis(0)
        z = (x - mean[0]) ** 2 / var
        vals = np.exp(-0.5 * z) / np.sqrt(2.0 * np.pi * var)
        return GridDensity(grid, vals)
    cov = np.asarray(cov, dtype=np.float64).reshape(2, 2)
    det = cov[0, 0] * cov[1, 1] - cov[0, 1] * cov[1, 0]
    if det <= 0.0:
        raise ValueError("2-D Gaussian needs a positive-definite covariance")
    inv = np.array([[cov[1, 1], -cov[0, 1]], [-cov[1, 0], cov[0, 0]]]) / det
    dx = grid.axis(0)[:, None] - mean[0]
    dy = grid.axis(1)[None, :] - mean[1]
    z = inv[0, 0] * dx * dx + 2.0 * inv[0, 1] * dx * dy + inv[1, 1] * dy * dy
    vals = np.exp(-0.5 * z) / (2.0 * np.pi * np.sqrt(det))
    return GridDensity(grid, vals)


def default_grid(means, stds, points=201, width_sigmas=6.0) -> UniformGrid:
    """Default receiver grid: centered at the prior mean with half-width
    `width_sigmas` prior standard deviations per axis."""
    means = np.atleast_1d(np.asarray(means, dtype=np.float64))
    stds = np.atleast_1d(np.asarray(stds, dtype=np.float64))
    if np.any(stds <= 0.0):
        raise ValueError("prior standard deviations must be positive")
    lower = tuple(m - width_sigmas * s for m, s in zip(means, stds))
    upper = tuple(m + width_sigmas * s for m, s in zip(means, stds))
    count = tuple(int(points) for _ in means)
    return UniformGrid(lower, upper, count)


def density_to_csv(d: GridDensity, path):
    """Write one row per node: axis coordinates then density value.

    1-D header is ``x,density``; 2-D header is ``x,xerr,density``.
    """
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        if d.grid.ndim == 1:
            writer.writerow(["x", "density"])
            for xi, vi in zip(d.grid.axis(0), d.values):
                writer.writerow([repr(float(xi)), repr(float(vi))])
        else:
            writer.writerow(["x", "xerr", "density"])
            xs = d.grid.axis(0)
            es = d.grid.axis(1)
            for i, xi in enumerate(xs):
                for j, ej in enumerate(es):
                    writer.writerow([repr(float(xi)), repr(float(ej)), repr(float(d.values[i, j]))])
