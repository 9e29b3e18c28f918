"""Exact multivariate polynomials with rational coefficients.

This is the coefficient algebra for everything symbolic in the toolkit:
frame fields, Lie brackets, divergences, weighted gradings.  All arithmetic
is done in ``fractions.Fraction``; no floating point enters until a
polynomial is evaluated at a float point.
"""

from __future__ import annotations

from fractions import Fraction
from numbers import Rational

import numpy as np

from .errors import DimensionMismatchError

__all__ = ["Polynomial"]


def _as_fraction(c):
    if isinstance(c, Fraction):
        return c
    if isinstance(c, Rational):
        return Fraction(c)
    if isinstance(c, int):
        return Fraction(c)
    if isinstance(c, float):
        # floats are dyadic rationals, so this conversion is exact
        return Fraction(c)
    raise TypeError(f"cannot use {type(c).__name__} as an exact coefficient")


class Polynomial:
    """Immutable multivariate polynomial in ``nvars`` variables.

    Terms are stored as a map from exponent tuples to nonzero Fractions.
    """

    __slots__ = ("nvars", "_terms")

    def __init__(self, nvars, terms=None):
        self.nvars = int(nvars)
        clean = {}
        if terms:
            for expo, coef in terms.items():
                expo = tuple(int(e) for e in expo)
                if len(expo) != self.nvars:
                    raise DimensionMismatchError(
                        f"exponent {expo} has arity {len(expo)}, expected {self.nvars}"
                    )
                if any(e < 0 for e in expo):
                    raise ValueError(f"negative exponent in {expo}")
                coef = _as_fraction(coef)
                if coef != 0:
                    acc = clean.get(expo)
                    coef = coef if acc is None else acc + coef
                    if coef != 0:
                        clean[expo] = coef
                    elif expo in clean:
                        del clean[expo]
        self._terms = clean

    # -- constructors -------------------------------------------------

    @staticmethod
    def zero(nvars):
        return Polynomial(nvars)

    @staticmethod
    def constant(c, nvars):
        c = _as_fraction(c)
        if c == 0:
            return Polynomial(nvars)
        return Polynomial(nvars, {(0,) * nvars: c})

    @staticmethod
    def variable(i, nvars):
        if not 0 <= i < nvars:
            raise IndexError(f"variable index {i} out of range for nvars={nvars}")
        expo = tuple(1 if j == i else 0 for j in range(nvars))
        return Polynomial(nvars, {expo: Fraction(1)})

    @staticmethod
    def monomial(coef, exponents):
        exponents = tuple(int(e) for e in exponents)
        return Polynomial(len(exponents), {exponents: coef})

    # -- inspection ----------------------------------------------------

    def terms(self):
        """Items (exponents, coefficient), sorted for reproducible iteration."""
        return sorted(self._terms.items())

    @property
    def is_zero(self):
        return not self._terms

    def degree(self):
        """Total degree; -1 for the zero polynomial."""
        if not self._terms:
            return -1
        return max(sum(e) for e in self._terms)

    def coefficient(self, exponents):
        return self._terms.get(tuple(exponents), Fraction(0))

    def constant_value(self):
        """The coefficient of the constant term."""
        return self._terms.get((0,) * self.nvars, Fraction(0))

    # -- algebra -------------------------------------------------------

    def _check(self, other):
        if self.nvars != other.nvars:
            raise DimensionMismatchError(
                f"polynomials over {self.nvars} and {other.nvars} variables"
            )

    def __add__(self, other):
        if isinstance(other, (int, Fraction)):
            other = Polynomial.constant(other, self.nvars)
        self._check(other)
        out = dict(self._terms)
        for expo, coef in other._terms.items():
            s = out.get(expo, Fraction(0)) + coef
            if s == 0:
                out.pop(expo, None)
            else:
                out[expo] = s
        return Polynomial(self.nvars, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.nvars, {e: -c for e, c in self._terms.items()})

    def __sub__(self, other):
        if isinstance(other, (int, Fraction)):
            other = Polynomial.constant(other, self.nvars)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, Fraction)):
            c = _as_fraction(other)
            if c == 0:
                return Polynomial(self.nvars)
            return Polynomial(self.nvars, {e: k * c for e, k in self._terms.items()})
        self._check(other)
        out = {}
        for e1, c1 in self._terms.items():
            for e2, c2 in other._terms.items():
                expo = tuple(a + b for a, b in zip(e1, e2))
                s = out.get(expo, Fraction(0)) + c1 * c2
                if s == 0:
                    out.pop(expo, None)
                else:
                    out[expo] = s
        return Polynomial(self.nvars, out)

    __rmul__ = __mul__

    def __pow__(self, k):
        k = int(k)
        if k < 0:
            raise ValueError("negative power of a polynomial")
        out = Polynomial.constant(1, self.nvars)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def partial(self, i):
        """Exact partial derivative with respect to variable ``i``."""
        out = {}
        for expo, coef in self._terms.items():
            if expo[i] == 0:
                continue
            e = list(expo)
            c = coef * e[i]
            e[i] -= 1
            out[tuple(e)] = c
        return Polynomial(self.nvars, out)

    def gradient(self):
        return tuple(self.partial(i) for i in range(self.nvars))

    def substitute(self, replacements):
        """Substitute polynomials for variables; exact.

        ``replacements`` maps variable index -> Polynomial (same arity as the
        result).  Unreplaced variables keep their identity.
        """
        some = next(iter(replacements.values()), None)
        out_nvars = some.nvars if some is not None else self.nvars
        out = Polynomial.zero(out_nvars)
        cache = {}
        for expo, coef in self._terms.items():
            term = Polynomial.constant(coef, out_nvars)
            for i, e in enumerate(expo):
                if e == 0:
                    continue
                if i in replacements:
                    base = replacements[i]
                else:
                    base = Polynomial.variable(i, out_nvars)
                key = (i, e)
                if key not in cache:
                    cache[key] = base**e
                term = term * cache[key]
            out = out + term
        return out

    def scale_variables(self, factors):
        """Exact composition with the diagonal map x_i -> factors[i] * x_i."""
        if len(factors) != self.nvars:
            raise DimensionMismatchError("one scale factor per variable required")
        fr = [_as_fraction(f) for f in factors]
        out = {}
        for expo, coef in self._terms.items():
            c = coef
            for f, e in zip(fr, expo):
                if e:
                    c *= f**e
            if c != 0:
                out[expo] = c
        return Polynomial(self.nvars, out)

    def translate(self, shift):
        """Exact composition with x -> x + shift (shift rational)."""
        repl = {
            i: Polynomial.variable(i, self.nvars) + Polynomial.constant(s, self.nvars)
            for i, s in enumerate(shift)
            if _as_fraction(s) != 0
        }
        if not repl:
            return self
        return self.substitute(repl)

    # -- evaluation ----------------------------------------------------

    def __call__(self, point):
        """Evaluate at a single point.

        Rational input gives an exact Fraction; float input gives a float.
        """
        if all(isinstance(x, (int, Rational)) for x in point):
            total = Fraction(0)
            for expo, coef in self._terms.items():
                t = coef
                for x, e in zip(point, expo):
                    if e:
                        t *= Fraction(x) ** e
                total += t
            return total
        total = 0.0
        for expo, coef in self._terms.items():
            t = float(coef)
            for x, e in zip(point, expo):
                if e:
                    t *= float(x) ** e
            total += t
        return total

    def eval_batch(self, points):
        """Vectorized evaluation on an (..., nvars) float array."""
        pts = np.asarray(points, dtype=float)
        out = np.zeros(pts.shape[:-1])
        for expo, coef in self._terms.items():
            t = np.full(pts.shape[:-1], float(coef))
            for i, e in enumerate(expo):
                if e == 1:
                    t = t * pts[..., i]
                elif e > 1:
                    t = t * pts[..., i] ** e
            out += t
        return out

    # -- comparison / display -------------------------------------------

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = Polynomial.constant(other, self.nvars)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.nvars == other.nvars and self._terms == other._terms

    def __hash__(self):
        return hash((self.nvars, frozenset(self._terms.items())))

    def __repr__(self):
        from .grammar import format_polynomial

        body = format_polynomial(self)
        return f"Polynomial({self.nvars}, {body!r})"
