"""Weighted gradings in privileged coordinates and nilpotent approximations.

Coordinates are supplied by the user, already centered at the point; the
grading either comes with them or is derived from the flag at the origin.
Truncation keeps the weighted order -1 part of each frame field; finding a
monomial of order <= -2 proves the coordinates are not privileged and is
rejected with a pointer to the offending monomial.  All operations here are
exact on the rational coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import NotPrivilegedError
from .fields import PolyVectorField, lie_bracket
from .poly import Polynomial
from .structure import growth_vector, point_flag

__all__ = [
    "Grading",
    "NilpotentApprox",
    "monomial_field_order",
    "field_order_range",
    "homogeneous_decompose",
    "truncate",
    "dilate",
    "dilation_rescale",
    "remainder_rescale",
    "nilpotency_check",
    "NilpotencyReport",
]


@dataclass(frozen=True)
class Grading:
    """Coordinate weights w_1 <= ... <= w_n with w_1 = 1."""

    weights: tuple

    def __post_init__(self):
        w = tuple(int(v) for v in self.weights)
        object.__setattr__(self, "weights", w)
        if not w or w[0] != 1:
            raise ValueError("weights must start at 1")
        if any(b < a for a, b in zip(w, w[1:])):
            raise ValueError("weights must be nondecreasing")

    @property
    def n(self):
        return len(self.weights)

    @property
    def step(self):
        return self.weights[-1]

    @property
    def Q(self):
        return sum(self.weights)

    @staticmethod
    def from_flag(S, rank_tol=1e-9):
        """Weights of the flag of S at the origin."""
        flag = point_flag(S, np.zeros(S.dim), rank_tol=rank_tol)
        return Grading(flag.weights)


def monomial_field_order(exponents, direction, grading: Grading) -> int:
    """Weighted order of x^alpha d_{direction+1}: sum w_k alpha_k - w_j."""
    w = grading.weights
    return sum(wk * ak for wk, ak in zip(w, exponents)) - w[direction]


def field_order_range(X: PolyVectorField, grading: Grading):
    """(min, max) weighted order over the monomials of X; (None, None) if zero."""
    orders = [
        monomial_field_order(expo, j, grading)
        for j, comp in enumerate(X.coeffs)
        for expo, _ in comp.terms()
    ]
    if not orders:
        return (None, None)
    return (min(orders), max(orders))


def homogeneous_decompose(X: PolyVectorField, grading: Grading):
    """Split X into weighted-homogeneous parts; returns [(order, part), ...]
    sorted by order.  The parts sum back to X exactly."""
    buckets = {}
    n = X.dim
    for j, comp in enumerate(X.coeffs):
        for expo, coef in comp.terms():
            s = monomial_field_order(expo, j, grading)
            part = buckets.setdefault(s, [dict() for _ in range(n)])
            part[j][expo] = coef
    out = []
    for s in sorted(buckets):
        comps = [Polynomial(n, terms) for terms in buckets[s]]
        out.append((s, PolyVectorField(comps)))
    return out


@dataclass(frozen=True)
class NilpotentApprox:
    """Truncated frame, remainders and the grading that produced them."""

    grading: Grading
    truncated_frame: tuple
    remainders: tuple

    @property
    def Q(self):
        return self.grading.Q

    @property
    def dim(self):
        return self.grading.n

    def truncated_structure(self, name="nilpotent"):
        from .structure import SubRiemannianStructure

        return SubRiemannianStructure(self.dim, self.truncated_frame, name=name)


def _check_triangular(X_hat, grading):
    # component j of a (-1)-homogeneous field may only involve variables of
    # strictly smaller weight; guaranteed by the grading arithmetic
    w = grading.weights
    for j, comp in enumerate(X_hat.coeffs):
        for expo, _ in comp.terms():
            for k, e in enumerate(expo):
                if e and w[k] >= w[j]:
                    raise AssertionError(
                        f"triangular form violated: d{j + 1} component uses x{k + 1}"
                    )


def truncate(S, grading: Grading = None, order: int = -1) -> NilpotentApprox:
    """Nilpotent approximation: keep the order-(-1) part of each frame field.

    Requires a polynomial frame whose monomials all have weighted order
    >= -1 (the operational test that the coordinates are privileged).
    """
    if not S.is_polynomial:
        raise TypeError("truncation requires a polynomial frame")
    if grading is None:
        grading = Grading.from_flag(S)
    if grading.n != S.dim:
        raise ValueError("grading arity does not match the structure dimension")
    truncated = []
    remainders = []
    for idx, X in enumerate(S.frame):
        keep = [dict() for _ in range(S.dim)]
        rest = [dict() for _ in range(S.dim)]
        for j, comp in enumerate(X.coeffs):
            for expo, coef in comp.terms():
                s = monomial_field_order(expo, j, grading)
                if s < order:
                    raise NotPrivilegedError(idx, j, expo, s)
                (keep if s == order else rest)[j][expo] = coef
        X_hat = PolyVectorField([Polynomial(S.dim, t) for t in keep])
        _check_triangular(X_hat, grading)
        truncated.append(X_hat)
        remainders.append(PolyVectorField([Polynomial(S.dim, t) for t in rest]))
    return NilpotentApprox(grading, tuple(truncated), tuple(remainders))


def dilate(z, grading: Grading, lam):
    """Anisotropic dilation (lam^{w_1} z_1, ..., lam^{w_n} z_n)."""
    if lam <= 0:
        raise ValueError("dilation parameter must be positive")
    z = np.asarray(z, dtype=float)
    scales = np.array([float(lam) ** w for w in grading.weights])
    return z * scales


def dilation_rescale(X: PolyVectorField, grading: Grading, r) -> PolyVectorField:
    """The field r (delta_{1/r})_* X, exactly on monomials.

    A monomial x^alpha d_j of weighted order s maps to r^{s+1} x^alpha d_j;
    requires all orders >= -1.  ``r`` is converted exactly (floats are
    dyadic rationals).
    """
    r = Fraction(r)
    if r <= 0:
        raise ValueError("rescaling parameter must be positive")
    comps = []
    for j, comp in enumerate(X.coeffs):
        terms = {}
        for expo, coef in comp.terms():
            s = monomial_field_order(expo, j, grading)
            if s < -1:
                raise ValueError(
                    f"monomial {expo} d{j + 1} has weighted order {s} < -1; "
                    "the grading does not grade this field"
                )
            terms[expo] = coef * r ** (s + 1)
        comps.append(Polynomial(X.dim, terms))
    return PolyVectorField(comps)


def remainder_rescale(X: PolyVectorField, grading: Grading, r) -> PolyVectorField:
    """Y^r = r (delta_{1/r})_* X for a remainder (all orders >= 0)."""
    lo, _ = field_order_range(X, grading)
    if lo is not None and lo < 0:
        raise ValueError(
            f"field has a monomial of weighted order {lo} < 0; not a remainder"
        )
    return dilation_rescale(X, grading, r)


@dataclass(frozen=True)
class NilpotencyReport:
    nilpotent: bool
    witness_word: tuple
    growth_match: bool
    growth_truncated: tuple
    growth_original: tuple

    @property
    def passed(self):
        return self.nilpotent and self.growth_match


def nilpotency_check(NA: NilpotentApprox, step_bound: int, original=None) -> NilpotencyReport:
    """Verify symbolically that brackets of length > step_bound vanish.

    Left-nested brackets of length step_bound + 1 suffice: longer ones are
    brackets with these, and all bracket words reduce to left-nested ones
    by the Jacobi identity.  Also compares the growth vector of the
    truncated frame at 0 with the original frame's when given.
    """
    frame = NA.truncated_frame
    level = [((i,), X) for i, X in enumerate(frame) if not X.is_zero]
    for _ in range(step_bound):
        nxt = []
        for word, W in level:
            for j, Xj in enumerate(frame):
                if Xj.is_zero:
                    continue
                B = lie_bracket(Xj, W)
                if not B.is_zero:
                    nxt.append(((j,) + word, B))
        level = nxt
    nilpotent = not level
    witness = level[0][0] if level else ()

    origin = np.zeros(NA.dim)
    g_trunc = growth_vector(NA.truncated_structure(), origin)
    if original is not None:
        g_orig = growth_vector(original, origin)
    else:
        g_orig = g_trunc
    return NilpotencyReport(
        nilpotent=nilpotent,
        witness_word=witness,
        growth_match=g_trunc == g_orig,
        growth_truncated=g_trunc,
        growth_original=g_orig,
    )
