"""Frames on R^n and their pointwise bracket flags.

A structure is an ambient dimension, a frame of vector fields (images of an
orthonormal frame) and a volume weight.  The flag analysis computes growth
vectors, weights, degree of nonholonomy, homogeneous dimension and the
regular/singular classification.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionMismatchError, HormanderError
from .fields import PolyVectorField, lie_bracket
from .fields_sym import SymVectorField
from .grids import halton_ball
from .poly import Polynomial

__all__ = [
    "SubRiemannianStructure",
    "PointFlag",
    "RegularityReport",
    "growth_vector",
    "point_flag",
    "classify_regularity",
]

DEFAULT_RANK_TOL = 1e-9
DEFAULT_DEPTH_BOUND = 6
GRAY_ZONE_FACTOR = 10.0


def _bracket_any(X, Y):
    if isinstance(X, PolyVectorField) and isinstance(Y, PolyVectorField):
        return lie_bracket(X, Y)
    return _to_sym(X).bracket(_to_sym(Y))


def _to_sym(X):
    if isinstance(X, SymVectorField):
        return X
    symbols = SymVectorField.coordinates(X.dim)
    exprs = []
    for comp in X.coeffs:
        acc = 0
        for expo, coef in comp.terms():
            term = sp_rational(coef)
            for s, e in zip(symbols, expo):
                if e:
                    term *= s**e
            acc += term
        exprs.append(acc)
    return SymVectorField(exprs, symbols)


def sp_rational(fr):
    import sympy as sp

    return sp.Rational(fr.numerator, fr.denominator)


class SubRiemannianStructure:
    """Ambient dimension, frame X_1..X_m and a volume weight (default 1).

    The frame fields may be exact PolyVectorFields or SymVectorFields
    (trig coefficients); symbolic-only operations require a polynomial frame.
    Instances are immutable; the internal bracket cache is filled once and
    is safe to share between threads.
    """

    def __init__(self, dim, frame, volume_weight=None, name=""):
        self.dim = int(dim)
        frame = tuple(frame)
        if not frame:
            raise ValueError("the frame must contain at least one field")
        for X in frame:
            if X.dim != self.dim:
                raise DimensionMismatchError(
                    f"frame field of dimension {X.dim} in structure of dimension {self.dim}"
                )
        self.frame = frame
        if isinstance(volume_weight, (int, float)) and volume_weight == 1:
            volume_weight = None
        if volume_weight is not None and not isinstance(volume_weight, Polynomial):
            raise TypeError("volume_weight must be a Polynomial or None")
        self.volume_weight = volume_weight
        self.name = name
        self._levels = None

    @property
    def rank(self):
        return len(self.frame)

    @property
    def is_polynomial(self):
        return all(isinstance(X, PolyVectorField) for X in self.frame)

    def translated(self, point, name=None):
        """The same structure in coordinates recentered at ``point``."""
        if not self.is_polynomial:
            raise TypeError("recentering requires a polynomial frame")
        frame = tuple(X.translate(point) for X in self.frame)
        weight = self.volume_weight.translate(point) if self.volume_weight else None
        return SubRiemannianStructure(
            self.dim, frame, weight, name or f"{self.name}@{tuple(point)}"
        )

    def with_frame(self, frame, name=None):
        return SubRiemannianStructure(
            self.dim, frame, self.volume_weight, name or self.name
        )

    def frame_matrix(self, point):
        """n x m matrix whose columns are X_i(point)."""
        pts = np.asarray(point, dtype=float)[None, :]
        cols = [X.eval_batch(pts)[0] for X in self.frame]
        return np.stack(cols, axis=1)

    def bracket_levels(self, depth):
        """Levels of left-nested bracket words: level 1 is the frame.

        Returns a list of levels, each a list of (word, field) with word a
        tuple of frame indices.  Zero fields are kept at level 1 but not
        extended further.
        """
        if self._levels is None:
            self._levels = [[((i,), X) for i, X in enumerate(self.frame)]]
        while len(self._levels) < depth:
            prev = self._levels[-1]
            nxt = []
            for word, W in prev:
                if W.is_zero:
                    continue
                for j, Xj in enumerate(self.frame):
                    if Xj.is_zero:
                        continue
                    nxt.append(((j,) + word, _bracket_any(Xj, W)))
            self._levels.append(nxt)
        return self._levels[:depth]


@dataclass(frozen=True)
class PointFlag:
    """Growth vector, weights and homogeneous dimension at a point.

    ``regular`` is True/False when classified, None when unknown (either
    unclassified or within the numeric gray zone).
    """

    point: tuple
    growth: tuple
    weights: tuple
    step: int
    Q: int
    regular: Optional[bool] = None

    def as_dict(self):
        return {
            "point": list(self.point),
            "growth": list(self.growth),
            "weights": list(self.weights),
            "step": self.step,
            "Q": self.Q,
            "regular": self.regular,
        }


@dataclass(frozen=True)
class RegularityReport:
    verdict: str  # "regular" | "singular" | "unknown"
    witness: Optional[tuple] = None
    witness_growth: Optional[tuple] = None


def _flag_ranks(S, x, rank_tol, depth_bound):
    """Growth vector and gray-zone flag via SVD ranks of bracket evaluations."""
    pt = np.asarray(x, dtype=float)[None, :]
    rows = []
    growth = []
    gray = False
    for level in range(1, depth_bound + 1):
        for _, W in S.bracket_levels(level)[level - 1]:
            rows.append(W.eval_batch(pt)[0])
        mat = np.stack(rows, axis=0)
        sv = np.linalg.svd(mat, compute_uv=False)
        smax = sv[0] if sv.size else 0.0
        if smax == 0.0:
            rank = 0
        else:
            threshold = rank_tol * smax
            retained = sv[sv > threshold]
            rank = int(retained.size)
            if retained.size and retained[-1] < GRAY_ZONE_FACTOR * threshold:
                gray = True
        growth.append(rank)
        if rank == S.dim:
            return tuple(growth), gray
    raise HormanderError(tuple(float(v) for v in x), growth[-1], S.dim, depth_bound)


def growth_vector(S, x, rank_tol=DEFAULT_RANK_TOL, depth_bound=DEFAULT_DEPTH_BOUND):
    """The sequence (n_1, ..., n_k) of flag dimensions at x, with n_k = n."""
    growth, _ = _flag_ranks(S, x, rank_tol, depth_bound)
    return growth


def point_flag(S, x, rank_tol=DEFAULT_RANK_TOL, depth_bound=DEFAULT_DEPTH_BOUND):
    """Growth vector, weights w_j, step and Q = sum of weights at x."""
    growth, gray = _flag_ranks(S, x, rank_tol, depth_bound)
    weights = []
    prev = 0
    for s, n_s in enumerate(growth, start=1):
        weights.extend([s] * (n_s - prev))
        prev = n_s
    del gray  # classification is a separate operation; see classify_regularity
    return PointFlag(
        point=tuple(float(v) for v in x),
        growth=growth,
        weights=tuple(weights),
        step=len(growth),
        Q=int(sum(weights)),
        regular=None,
    )


def classify_regularity(
    S,
    x,
    radius,
    samples=16,
    rank_tol=DEFAULT_RANK_TOL,
    depth_bound=DEFAULT_DEPTH_BOUND,
):
    """Sample growth vectors near x and compare with the growth at x.

    Returns a RegularityReport; the verdict is "unknown" when any computed
    rank falls in the gray zone of the singular-value threshold.
    """
    if samples < 8:
        raise ValueError("samples must be >= 8")
    base, gray = _flag_ranks(S, x, rank_tol, depth_bound)
    points = halton_ball(x, radius, samples, S.dim)
    for p in points:
        growth, g2 = _flag_ranks(S, p, rank_tol, depth_bound)
        gray = gray or g2
        if growth != base:
            if gray:
                return RegularityReport("unknown", tuple(p), growth)
            return RegularityReport("singular", tuple(p), growth)
    if gray:
        return RegularityReport("unknown")
    return RegularityReport("regular")
