"""Boxes, voxel grids, grid functions and test functions.

Quadratures in this package are midpoint rules on voxel centers; the
classes here carry the shared bookkeeping (axis layout, centers, volumes)
so every module integrates the same way.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .poly import Polynomial

__all__ = [
    "Box",
    "GridFunction",
    "PolyBump",
    "GaussianBump",
    "PolynomialTest",
    "halton_ball",
]


@dataclass(frozen=True)
class Box:
    """Axis-aligned box [lo_1, hi_1] x ... x [lo_n, hi_n]."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ValueError("lo and hi must have the same length")
        if any(a >= b for a, b in zip(self.lo, self.hi)):
            raise ValueError("box must have positive extent on every axis")

    @staticmethod
    def cube(half_width, n, center=None):
        c = np.zeros(n) if center is None else np.asarray(center, dtype=float)
        return Box(tuple(c - half_width), tuple(c + half_width))

    @staticmethod
    def from_half_widths(half_widths, center=None):
        h = np.asarray(half_widths, dtype=float)
        c = np.zeros(len(h)) if center is None else np.asarray(center, dtype=float)
        return Box(tuple(c - h), tuple(c + h))

    @property
    def n(self):
        return len(self.lo)

    @property
    def widths(self):
        return np.asarray(self.hi) - np.asarray(self.lo)

    @property
    def volume(self):
        return float(np.prod(self.widths))

    def contains(self, points, pad=0.0):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo = np.asarray(self.lo) - pad
        hi = np.asarray(self.hi) + pad
        return np.all((pts >= lo) & (pts <= hi), axis=1)

    def resolution_tuple(self, resolution):
        if isinstance(resolution, int):
            return (resolution,) * self.n
        resolution = tuple(int(r) for r in resolution)
        if len(resolution) != self.n:
            raise ValueError("one resolution entry per axis required")
        return resolution

    def axes(self, resolution):
        """Voxel-center coordinates along each axis."""
        res = self.resolution_tuple(resolution)
        out = []
        for lo, hi, r in zip(self.lo, self.hi, res):
            h = (hi - lo) / r
            out.append(lo + h * (np.arange(r) + 0.5))
        return out

    def spacing(self, resolution):
        res = self.resolution_tuple(resolution)
        return self.widths / np.asarray(res)

    def centers(self, resolution):
        """All voxel centers as an (N, n) array in C order."""
        axes = self.axes(resolution)
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def voxel_volume(self, resolution):
        return float(np.prod(self.spacing(resolution)))


class GridFunction:
    """Scalar values at the voxel centers of a box grid."""

    def __init__(self, box, resolution, values):
        self.box = box
        self.resolution = box.resolution_tuple(resolution)
        values = np.asarray(values, dtype=float)
        if values.shape != self.resolution:
            raise ValueError(
                f"values shape {values.shape} does not match resolution {self.resolution}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("grid values must be finite")
        self.values = values

    @staticmethod
    def from_function(box, resolution, fn):
        res = box.resolution_tuple(resolution)
        centers = box.centers(res)
        vals = np.asarray(fn(centers), dtype=float).reshape(res)
        return GridFunction(box, res, vals)

    @staticmethod
    def indicator(box, resolution, level_fn):
        """Indicator of {level < 0} sampled at voxel centers."""
        res = box.resolution_tuple(resolution)
        vals = (np.asarray(level_fn(box.centers(res))) < 0).astype(float)
        return GridFunction(box, res, vals.reshape(res))

    @property
    def voxel_volume(self):
        return self.box.voxel_volume(self.resolution)

    def centers(self):
        return self.box.centers(self.resolution)

    def integrate(self, weights=None):
        if weights is None:
            return float(self.values.sum() * self.voxel_volume)
        w = np.asarray(weights, dtype=float).reshape(self.values.shape)
        return float((self.values * w).sum() * self.voxel_volume)

    def boundary_mask(self):
        """Mask of voxels on the outermost layer of the grid."""
        mask = np.zeros(self.resolution, dtype=bool)
        for axis in range(len(self.resolution)):
            sl = [slice(None)] * len(self.resolution)
            sl[axis] = 0
            mask[tuple(sl)] = True
            sl[axis] = -1
            mask[tuple(sl)] = True
        return mask


# -- test functions --------------------------------------------------------


class PolyBump:
    """Separable bump prod_i (1 - ((x_i - c_i)/h_i)^2)_+^2.

    Nonnegative, C^1, compactly supported in the box c +- h.
    """

    def __init__(self, center, half_widths):
        self.center = np.asarray(center, dtype=float)
        self.half_widths = np.asarray(half_widths, dtype=float)
        if np.any(self.half_widths <= 0):
            raise ValueError("half widths must be positive")
        self.nonnegative = True

    @property
    def support(self):
        return Box(
            tuple(self.center - self.half_widths),
            tuple(self.center + self.half_widths),
        )

    def _u(self, points):
        pts = np.asarray(points, dtype=float)
        return (pts - self.center) / self.half_widths

    def value(self, points):
        u = self._u(points)
        f = np.clip(1.0 - u * u, 0.0, None) ** 2
        return np.prod(f, axis=-1)

    def grad(self, points):
        u = self._u(points)
        q = np.clip(1.0 - u * u, 0.0, None)
        f = q * q
        # d/dx_i (1-u^2)^2 = -4 u (1-u^2) / h_i on the support
        df = -4.0 * u * q / self.half_widths
        prod_all = np.prod(f, axis=-1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            others = np.where(f > 0, prod_all / f, 0.0)
        return others * df


class GaussianBump:
    """Gaussian exp(-|x-c|^2 / (2 sigma^2)); numerically supported within ~8 sigma."""

    def __init__(self, center, sigma):
        self.center = np.asarray(center, dtype=float)
        self.sigma = float(sigma)
        self.nonnegative = True

    def value(self, points):
        d = np.asarray(points, dtype=float) - self.center
        return np.exp(-np.sum(d * d, axis=-1) / (2 * self.sigma**2))

    def grad(self, points):
        d = np.asarray(points, dtype=float) - self.center
        v = self.value(points)[..., None]
        return -v * d / self.sigma**2


class PolynomialTest:
    """Adapter exposing a Polynomial as a test function with exact gradient."""

    def __init__(self, poly: Polynomial):
        self.poly = poly
        self._grad = poly.gradient()
        self.nonnegative = False

    def value(self, points):
        return self.poly.eval_batch(points)

    def grad(self, points):
        pts = np.asarray(points, dtype=float)
        return np.stack([g.eval_batch(pts) for g in self._grad], axis=-1)


def halton_ball(center, radius, n_points, dim):
    """Deterministic quasi-random points in the Euclidean ball."""
    from scipy.stats import qmc

    sampler = qmc.Halton(d=dim, scramble=False)
    out = []
    # rejection from the enclosing cube; acceptance rate is fine for dim <= 5
    while len(out) < n_points:
        draw = sampler.random(4 * n_points)
        cube = 2.0 * draw - 1.0
        keep = cube[np.sum(cube * cube, axis=1) <= 1.0]
        out.extend(keep.tolist())
    pts = np.asarray(out[:n_points])
    return np.asarray(center, dtype=float) + radius * pts
