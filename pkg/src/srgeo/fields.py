"""Polynomial vector fields: exact algebra, flows and distributional pairings.

The symbolic operations (brackets, divergence with unit volume weight,
application to polynomials) are exact in rational arithmetic; flows and
pairings are floating point with declared stopping rules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DimensionMismatchError, FlowExitError
from .poly import Polynomial

__all__ = [
    "PolyVectorField",
    "FlowResult",
    "lie_bracket",
    "divergence",
    "WeightedDivergence",
    "flow",
    "flow_batch",
    "pair_distributional",
]

FLOW_ENDPOINT_TOL = 1e-9
FLOW_MAX_STEPS = 1 << 20


class PolyVectorField:
    """Vector field on R^n with polynomial components (exact coefficients).

    Instances are immutable after construction; every method returns a new
    object, so sharing between threads is safe.
    """

    __slots__ = ("dim", "coeffs", "_partials")

    def __init__(self, coeffs):
        coeffs = tuple(coeffs)
        if not coeffs:
            raise ValueError("a vector field needs at least one component")
        n = coeffs[0].nvars
        if len(coeffs) != n or any(c.nvars != n for c in coeffs):
            raise DimensionMismatchError(
                "a field on R^n must have exactly n polynomial components in n variables"
            )
        self.dim = n
        self.coeffs = coeffs
        self._partials = None

    # -- constructors ---------------------------------------------------

    @staticmethod
    def zero(n):
        return PolyVectorField([Polynomial.zero(n)] * n)

    @staticmethod
    def coordinate(j, n):
        """The constant field d_{j+1} (0-based index j)."""
        comps = [Polynomial.zero(n)] * n
        comps[j] = Polynomial.constant(1, n)
        return PolyVectorField(comps)

    @staticmethod
    def from_text(text, n):
        from .grammar import parse_vector_field

        return parse_vector_field(text, n)

    # -- algebra ----------------------------------------------------------

    def __add__(self, other):
        self._check(other)
        return PolyVectorField([a + b for a, b in zip(self.coeffs, other.coeffs)])

    def __sub__(self, other):
        self._check(other)
        return PolyVectorField([a - b for a, b in zip(self.coeffs, other.coeffs)])

    def __neg__(self):
        return PolyVectorField([-a for a in self.coeffs])

    def __mul__(self, scalar):
        return PolyVectorField([c * scalar for c in self.coeffs])

    __rmul__ = __mul__

    def mul_poly(self, p: Polynomial):
        """The field p*X (used for div(psi X) identities)."""
        return PolyVectorField([c * p for c in self.coeffs])

    def _check(self, other):
        if not isinstance(other, PolyVectorField) or other.dim != self.dim:
            raise DimensionMismatchError("vector fields live in different dimensions")

    @property
    def is_zero(self):
        return all(c.is_zero for c in self.coeffs)

    def degree(self):
        return max(c.degree() for c in self.coeffs)

    def apply_to(self, psi: Polynomial) -> Polynomial:
        """Exact derivation X(psi) = sum_i X_i d_i(psi)."""
        out = Polynomial.zero(self.dim)
        for i, comp in enumerate(self.coeffs):
            if not comp.is_zero:
                out = out + comp * psi.partial(i)
        return out

    def translate(self, shift):
        """The field in coordinates recentered at ``shift`` (x -> x + shift)."""
        return PolyVectorField([c.translate(shift) for c in self.coeffs])

    # -- evaluation -------------------------------------------------------

    def evaluate(self, point):
        """Evaluate at one point; exact for rational input."""
        return tuple(c(point) for c in self.coeffs)

    def eval_batch(self, points):
        """(B, n) float points -> (B, n) field values."""
        pts = np.asarray(points, dtype=float)
        return np.stack([c.eval_batch(pts) for c in self.coeffs], axis=-1)

    def _partial_table(self):
        if self._partials is None:
            table = tuple(
                tuple(c.partial(l) for l in range(self.dim)) for c in self.coeffs
            )
            self._partials = table
        return self._partials

    def jacobian_batch(self, points):
        """(B, n) points -> (B, n, n) with J[b, j, l] = d_l X_j."""
        pts = np.asarray(points, dtype=float)
        table = self._partial_table()
        rows = []
        for j in range(self.dim):
            rows.append(
                np.stack([table[j][l].eval_batch(pts) for l in range(self.dim)], axis=-1)
            )
        return np.stack(rows, axis=-2)

    def __eq__(self, other):
        if not isinstance(other, PolyVectorField):
            return NotImplemented
        return self.dim == other.dim and self.coeffs == other.coeffs

    def __hash__(self):
        return hash((self.dim, self.coeffs))

    def __repr__(self):
        from .grammar import format_vector_field

        return f"PolyVectorField({self.dim}, {format_vector_field(self)!r})"


def lie_bracket(X: PolyVectorField, Y: PolyVectorField) -> PolyVectorField:
    """Exact Lie bracket [X, Y]; antisymmetric, satisfies the Jacobi identity."""
    X._check(Y)
    n = X.dim
    comps = []
    for j in range(n):
        acc = Polynomial.zero(n)
        for i in range(n):
            if not X.coeffs[i].is_zero:
                acc = acc + X.coeffs[i] * Y.coeffs[j].partial(i)
            if not Y.coeffs[i].is_zero:
                acc = acc - Y.coeffs[i] * X.coeffs[j].partial(i)
        comps.append(acc)
    return PolyVectorField(comps)


class WeightedDivergence:
    """div_omega X = div X + X(log omega_bar) as an evaluable expression.

    Kept separate from Polynomial because of the 1/omega_bar factor; the
    weight is checked for positivity wherever it is sampled.
    """

    def __init__(self, div_poly, x_omega, omega):
        self.div_poly = div_poly
        self.x_omega = x_omega
        self.omega = omega

    def eval_batch(self, points):
        w = self.omega.eval_batch(points)
        if np.any(w <= 0):
            raise ValueError("volume weight is not strictly positive on the sampled box")
        return self.div_poly.eval_batch(points) + self.x_omega.eval_batch(points) / w

    def __call__(self, point):
        w = self.omega(point)
        if w <= 0:
            raise ValueError("volume weight is not strictly positive at the point")
        return self.div_poly(point) + self.x_omega(point) / w


def divergence(X: PolyVectorField, volume_weight=None):
    """Divergence of X with respect to omega = omega_bar dx.

    With the default weight the result is an exact Polynomial; a nonconstant
    weight produces a WeightedDivergence expression.
    """
    div = Polynomial.zero(X.dim)
    for i, comp in enumerate(X.coeffs):
        div = div + comp.partial(i)
    if volume_weight is None:
        return div
    if isinstance(volume_weight, (int, Fraction)):
        if volume_weight <= 0:
            raise ValueError("volume weight must be positive")
        return div
    if volume_weight.degree() <= 0:
        c = volume_weight.constant_value()
        if c <= 0:
            raise ValueError("volume weight must be positive")
        return div
    return WeightedDivergence(div, X.apply_to(volume_weight), volume_weight)


@dataclass(frozen=True)
class FlowResult:
    """Endpoint of the flow map and its volume Jacobian at the start point."""

    endpoint: np.ndarray
    jacobian: float
    steps: int


def _rk4_augmented(X, div_poly, x0, t, steps, safety_box):
    """Fixed-step RK4 on (y, log J); returns (endpoint, logJ)."""
    y = [float(v) for v in x0]
    logj = 0.0
    h = t / steps
    comps = X.coeffs
    n = X.dim
    for k in range(steps):
        k1 = [float(c(y)) for c in comps]
        d1 = float(div_poly(y))
        y2 = [y[i] + 0.5 * h * k1[i] for i in range(n)]
        k2 = [float(c(y2)) for c in comps]
        d2 = float(div_poly(y2))
        y3 = [y[i] + 0.5 * h * k2[i] for i in range(n)]
        k3 = [float(c(y3)) for c in comps]
        d3 = float(div_poly(y3))
        y4 = [y[i] + h * k3[i] for i in range(n)]
        k4 = [float(c(y4)) for c in comps]
        d4 = float(div_poly(y4))
        y = [y[i] + h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]) for i in range(n)]
        logj += h / 6.0 * (d1 + 2 * d2 + 2 * d3 + d4)
        if safety_box is not None and not bool(safety_box.contains([y])[0]):
            raise FlowExitError((k + 1) * h, np.asarray(y))
        if not all(math.isfinite(v) for v in y):
            raise FlowExitError((k + 1) * h, np.asarray(y))
    return y, logj


def flow(X: PolyVectorField, x0, t, steps=None, safety_box=None) -> FlowResult:
    """Flow x0 for time t along X with RK4; Jacobian via Liouville.

    With ``steps=None`` the step count starts at max(64, ceil(|t|*256)) and
    doubles until two successive endpoints agree to 1e-9 in max norm
    (capped at 2**20 steps).
    """
    x0 = [float(v) for v in x0]
    if t == 0:
        return FlowResult(np.asarray(x0), 1.0, 0)
    div_poly = divergence(X)
    if steps is not None:
        steps = int(steps)
        if steps < 1:
            raise ValueError("steps must be >= 1")
        y, logj = _rk4_augmented(X, div_poly, x0, t, steps, safety_box)
        return FlowResult(np.asarray(y), math.exp(logj), steps)
    steps = max(64, math.ceil(abs(t) * 256))
    y, logj = _rk4_augmented(X, div_poly, x0, t, steps, safety_box)
    while steps < FLOW_MAX_STEPS:
        steps2 = steps * 2
        y2, logj2 = _rk4_augmented(X, div_poly, x0, t, steps2, safety_box)
        if max(abs(a - b) for a, b in zip(y, y2)) < FLOW_ENDPOINT_TOL:
            return FlowResult(np.asarray(y2), math.exp(logj2), steps2)
        y, logj, steps = y2, logj2, steps2
    return FlowResult(np.asarray(y), math.exp(logj), steps)


def flow_batch(X: PolyVectorField, points, t, steps):
    """Fixed-step RK4 flow of many points at once (no Jacobian, no box check)."""
    y = np.array(points, dtype=float)
    h = t / steps
    for _ in range(steps):
        k1 = X.eval_batch(y)
        k2 = X.eval_batch(y + 0.5 * h * k1)
        k3 = X.eval_batch(y + 0.5 * h * k2)
        k4 = X.eval_batch(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def pair_distributional(X: PolyVectorField, u, phi, volume_weight=None):
    """The pairing <D_X u, phi> = -int u phi div X omega - int u (X phi) omega.

    ``u`` is a GridFunction, ``phi`` a test function with a gradient
    (PolyBump, GaussianBump, PolynomialTest).  phi must be numerically
    supported inside the grid box.
    """
    values = u.values.ravel()
    centers = u.centers()
    phi_vals = np.asarray(phi.value(centers))
    boundary = u.boundary_mask().ravel()
    peak = float(np.max(np.abs(phi_vals))) or 1.0
    if phi_vals[boundary].size and np.max(np.abs(phi_vals[boundary])) > 1e-9 * peak:
        raise ValueError("test function support touches the grid box boundary")

    div = divergence(X, volume_weight)
    div_vals = div.eval_batch(centers)
    x_phi = np.einsum("bi,bi->b", X.eval_batch(centers), phi.grad(centers))
    if volume_weight is None:
        w = 1.0
    else:
        w = volume_weight.eval_batch(centers)
        if np.any(w <= 0):
            raise ValueError("volume weight is not strictly positive on the grid")
    integrand = -values * (phi_vals * div_vals + x_phi) * w
    return float(integrand.sum() * u.voxel_volume)
