"""Tangent Carnot-group reconstruction from flows of the truncated frame.

For a step-2 nilpotent approximation whose Lie algebra has dimension n
(the checkable sufficient criterion for a trivial isotropy group), the
group product is x * y = Phi_1^W(Phi_1^V(0)) where Phi_1^V(0) = x and
Phi_1^W(0) = y.  Flows of algebra elements are integrated exactly in t:
the fields are triangular in the weight order, so every coordinate is a
polynomial in t.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DegenerateNormalError, IsotropyError
from .fields import PolyVectorField, lie_bracket
from .grids import Box
from .nilpotent import NilpotentApprox, nilpotency_check
from .poly import Polynomial

__all__ = [
    "GroupLaw",
    "group_law_from_flows",
    "triangular_flow",
    "left_invariance_check",
    "InvarianceReport",
    "VerticalHalfspace",
    "vertical_halfspace",
    "halfspace_perimeter_unit_ball",
    "HalfspacePerimeterReport",
]


def _poly_antiderivative(coeffs):
    out = np.zeros(len(coeffs) + 1)
    for k, c in enumerate(coeffs):
        out[k + 1] = c / (k + 1)
    return out


def triangular_flow(V: PolyVectorField, z0, t=1.0, weights=None):
    """Exact time-t flow of a weight-triangular polynomial field.

    Component j may depend only on coordinates of strictly smaller weight
    (true for every element of the Lie algebra of a truncated frame), so
    each coordinate solves to a polynomial in t, integrated exactly.
    """
    n = V.dim
    z0 = [float(v) for v in z0]
    if weights is None:
        weights = [1] * n
    order = sorted(range(n), key=lambda j: weights[j])
    # coordinate trajectories as polynomial-in-t coefficient arrays
    coord_polys = [None] * n
    for j in order:
        comp = V.coeffs[j]
        rhs = np.zeros(1)
        for expo, coef in comp.terms():
            term = np.array([float(coef)])
            for k, e in enumerate(expo):
                if e == 0:
                    continue
                if coord_polys[k] is None:
                    raise ValueError(
                        "field is not triangular in the weight order "
                        f"(component d{j + 1} uses x{k + 1})"
                    )
                for _ in range(e):
                    term = np.convolve(term, coord_polys[k])
            m = max(len(rhs), len(term))
            rhs = np.pad(rhs, (0, m - len(rhs))) + np.pad(term, (0, m - len(term)))
        poly = _poly_antiderivative(rhs)
        poly[0] = z0[j]
        coord_polys[j] = poly
    tval = float(t)
    return np.array(
        [np.polynomial.polynomial.polyval(tval, coord_polys[j]) for j in range(n)]
    )


def _rational_rank(vectors):
    """Rank over Q of exact coefficient vectors (lists of Fractions)."""
    rows = [list(v) for v in vectors]
    rank = 0
    ncols = len(rows[0]) if rows else 0
    col = 0
    r = 0
    while r < len(rows) and col < ncols:
        pivot = None
        for i in range(r, len(rows)):
            if rows[i][col] != 0:
                pivot = i
                break
        if pivot is None:
            col += 1
            continue
        rows[r], rows[pivot] = rows[pivot], rows[r]
        pv = rows[r][col]
        for i in range(r + 1, len(rows)):
            if rows[i][col] != 0:
                f = rows[i][col] / pv
                rows[i] = [a - f * b for a, b in zip(rows[i], rows[r])]
        r += 1
        col += 1
    return r


def _field_coefficient_vector(X: PolyVectorField, keys):
    return [X.coeffs[j].coefficient(expo) for (j, expo) in keys]


def _lie_dimension(fields):
    """Exact dimension of the span of polynomial vector fields."""
    keys = sorted(
        {
            (j, expo)
            for X in fields
            for j, comp in enumerate(X.coeffs)
            for expo, _ in comp.terms()
        }
    )
    if not keys:
        return 0
    vectors = [_field_coefficient_vector(X, keys) for X in fields]
    return _rational_rank(vectors)


@dataclass(frozen=True)
class GroupLaw:
    """Group operation reconstructed from flows; step-2 only."""

    dim: int
    grading: object
    frame: tuple  # truncated frame
    brackets: tuple  # [X_i, X_j] for i < j, as fields
    first_layer_matrix: np.ndarray  # (n1, m): weight-1 components of X_i(0)
    vertical_matrix: np.ndarray  # (n2, n_brackets): weight-2 comps of brackets
    weight1_idx: tuple
    weight2_idx: tuple
    structure_constants: np.ndarray  # (m, m, n2): [X_i, X_j] vertical parts

    @property
    def step(self):
        return 2

    def solve_algebra_element(self, x):
        """An algebra element V with Phi_1^V(0) = x (minimal-norm choice)."""
        x = np.asarray(x, dtype=float)
        a, *_ = np.linalg.lstsq(
            self.first_layer_matrix, x[list(self.weight1_idx)], rcond=None
        )
        horizontal = _combine(self.frame, a)
        z_star = triangular_flow(horizontal, np.zeros(self.dim), 1.0,
                                 self.grading.weights)
        defect = x[list(self.weight2_idx)] - z_star[list(self.weight2_idx)]
        if self.vertical_matrix.size:
            b, *_ = np.linalg.lstsq(self.vertical_matrix, defect, rcond=None)
        else:
            b = np.zeros(0)
        V = horizontal
        for coef, B in zip(b, self.brackets):
            V = V + coef * B
        end = triangular_flow(V, np.zeros(self.dim), 1.0, self.grading.weights)
        if np.linalg.norm(end - x) > 1e-8 * (1 + np.linalg.norm(x)):
            raise IsotropyError(
                f"could not steer the origin to {tuple(x)} with one algebra flow"
            )
        return V

    def flow_from(self, V, x, t=1.0):
        return triangular_flow(V, x, t, self.grading.weights)

    def evaluate(self, x, y):
        """x * y = Phi_1^W(x) where Phi_1^W(0) = y."""
        W = self.solve_algebra_element(y)
        return triangular_flow(W, x, 1.0, self.grading.weights)

    def inverse(self, x):
        V = self.solve_algebra_element(x)
        return triangular_flow(-1 * V, np.zeros(self.dim), 1.0, self.grading.weights)


def _combine(fields, coeffs):
    out = PolyVectorField.zero(fields[0].dim)
    for c, X in zip(coeffs, fields):
        if c != 0:
            out = out + float(c) * X
    return out


def group_law_from_flows(NA: NilpotentApprox) -> GroupLaw:
    """Reconstruct the Carnot group product of a step-2 nilpotent frame.

    Raises IsotropyError when the Lie algebra dimension differs from n
    (the isotropy criterion is then not verified and no law is produced).
    """
    grading = NA.grading
    if grading.step > 2:
        raise ValueError("group reconstruction is restricted to step <= 2 gradings")
    report = nilpotency_check(NA, grading.step)
    if not report.nilpotent:
        raise IsotropyError(
            f"truncated frame is not nilpotent of step {grading.step}; "
            f"witness bracket {report.witness_word}"
        )
    frame = NA.truncated_frame
    m = len(frame)
    n = NA.dim
    brackets = []
    bracket_pairs = []
    for i in range(m):
        for j in range(i + 1, m):
            B = lie_bracket(frame[i], frame[j])
            if not B.is_zero:
                brackets.append(B)
                bracket_pairs.append((i, j))
    algebra = [X for X in frame if not X.is_zero] + brackets
    lie_dim = _lie_dimension(algebra)
    if lie_dim != n:
        raise IsotropyError(
            f"Lie algebra of the truncated frame has dimension {lie_dim}, "
            f"expected {n}; isotropy condition not verified"
        )

    w = grading.weights
    w1 = tuple(j for j in range(n) if w[j] == 1)
    w2 = tuple(j for j in range(n) if w[j] == 2)
    origin = np.zeros((1, n))
    frame_at_0 = np.stack([X.eval_batch(origin)[0] for X in frame], axis=1)
    first_layer = frame_at_0[list(w1), :]
    if brackets:
        vertical = np.stack(
            [B.eval_batch(origin)[0][list(w2)] for B in brackets], axis=1
        )
    else:
        vertical = np.zeros((len(w2), 0))

    constants = np.zeros((m, m, len(w2)))
    for (i, j), B in zip(bracket_pairs, brackets):
        vals = B.eval_batch(origin)[0][list(w2)]
        constants[i, j] = vals
        constants[j, i] = -vals

    return GroupLaw(
        dim=n,
        grading=grading,
        frame=frame,
        brackets=tuple(brackets),
        first_layer_matrix=first_layer,
        vertical_matrix=vertical,
        weight1_idx=w1,
        weight2_idx=w2,
        structure_constants=constants,
    )


@dataclass(frozen=True)
class InvarianceReport:
    passed: bool
    max_error: float
    witness: tuple = ()


def left_invariance_check(law: GroupLaw, NA: NilpotentApprox, pairs=20, seed=0,
                          tol=1e-6, fd_step=1e-5) -> InvarianceReport:
    """Check ((l_x)_* X_i)(x * y) = X_i(x * y) by central differences."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    witness = ()
    for _ in range(pairs):
        x = rng.uniform(-1, 1, law.dim)
        y = rng.uniform(-1, 1, law.dim)
        xy = law.evaluate(x, y)
        for i, X in enumerate(NA.truncated_frame):
            if X.is_zero:
                continue
            yp = triangular_flow(X, y, fd_step, law.grading.weights)
            ym = triangular_flow(X, y, -fd_step, law.grading.weights)
            push = (law.evaluate(x, yp) - law.evaluate(x, ym)) / (2 * fd_step)
            direct = X.eval_batch(xy[None, :])[0]
            err = float(np.max(np.abs(push - direct)))
            if err > worst:
                worst = err
                witness = (tuple(x), tuple(y), i)
    return InvarianceReport(passed=worst <= tol, max_error=worst, witness=witness)


@dataclass(frozen=True)
class VerticalHalfspace:
    """F = {z : <z_h, w> > 0}, monotone along sum_i nu*_i X_i."""

    nu_star: np.ndarray
    w: np.ndarray  # full coordinate vector; only weight-1 entries nonzero
    level: Polynomial  # F = {level < 0}
    direction: PolyVectorField  # sum_i nu*_i X_i

    def indicator(self, points):
        return self.level.eval_batch(points) < 0

    def as_setrep(self, box: Box, resolution):
        from .perimeter import SetRep

        return SetRep(self.level, box, resolution)


def vertical_halfspace(nu_star, NA: NilpotentApprox) -> VerticalHalfspace:
    """Halfspace of the tangent group with inner horizontal normal nu*.

    The sign convention matches the polar decomposition: the indicator's
    derivative along sum_i nu*_i X_i is a nonnegative measure.
    """
    nu_star = np.asarray(nu_star, dtype=float)
    if abs(np.linalg.norm(nu_star) - 1.0) > 1e-8:
        raise ValueError("nu* must be a unit vector")
    direction = PolyVectorField.zero(NA.dim)
    for c, X in zip(nu_star, NA.truncated_frame):
        if c != 0:
            direction = direction + float(c) * X
    origin = np.zeros((1, NA.dim))
    w_full = direction.eval_batch(origin)[0]
    w1 = [j for j in range(NA.dim) if NA.grading.weights[j] == 1]
    w_vec = np.zeros(NA.dim)
    w_vec[w1] = w_full[w1]
    if np.linalg.norm(w_vec) <= 1e-12:
        raise DegenerateNormalError(
            "sum_i nu*_i X_i vanishes at the origin; no halfspace direction"
        )
    n = NA.dim
    level = Polynomial.zero(n)
    for j in w1:
        if w_vec[j] != 0:
            level = level - Polynomial.variable(j, n) * Fraction(float(w_vec[j]))
    return VerticalHalfspace(nu_star=nu_star, w=w_vec, level=level,
                             direction=direction)


@dataclass(frozen=True)
class HalfspacePerimeterReport:
    perimeter: float
    ball_volume: float
    ratio: float
    unknown_voxels: int


def halfspace_perimeter_unit_ball(
    F: VerticalHalfspace,
    NA: NilpotentApprox,
    box: Box,
    resolution,
    mask_opts=None,
) -> HalfspacePerimeterReport:
    """||D_ghat 1_F||(B_1) / Leb(B_1) for the truncated structure.

    The boundary hyperplane is triangulated and integrated with the same
    facet quadrature and ball-mask machinery used for perimeter densities,
    so comparisons against density ratios share their discretization.
    """
    from .perimeter import density_ratio

    S_hat = NA.truncated_structure()
    E = F.as_setrep(box, resolution)
    rep = density_ratio(
        S_hat, E, np.zeros(NA.dim), 1.0, box, resolution,
        mask_opts=dict(mask_opts or {}),
    )
    return HalfspacePerimeterReport(
        perimeter=rep.perimeter_in_ball,
        ball_volume=rep.ball_volume,
        ratio=rep.ratio,
        unknown_voxels=rep.unknown_voxels,
    )
