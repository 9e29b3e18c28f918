"""Sympy-backed vector fields for non-polynomial frames.

Only the rototranslation built-in needs this path; it supports evaluation,
Jacobians and brackets, which is what the flag, metric and distance
operations require.  The exact polynomial layer stays in ``fields``.
"""

from __future__ import annotations

import numpy as np
import sympy as sp

from .errors import DimensionMismatchError

__all__ = ["SymVectorField"]


class SymVectorField:
    """Vector field with smooth (sympy) coefficient expressions."""

    def __init__(self, exprs, symbols):
        self.symbols = tuple(symbols)
        self.dim = len(self.symbols)
        exprs = tuple(sp.sympify(e) for e in exprs)
        if len(exprs) != self.dim:
            raise DimensionMismatchError("one expression per coordinate required")
        self.exprs = exprs
        self._fn = None
        self._jac_fn = None

    @staticmethod
    def coordinates(n, prefix="x"):
        return sp.symbols(f"{prefix}1:{n + 1}")

    @property
    def is_zero(self):
        return all(sp.simplify(e) == 0 for e in self.exprs)

    def bracket(self, other: "SymVectorField") -> "SymVectorField":
        if other.dim != self.dim:
            raise DimensionMismatchError("vector fields live in different dimensions")
        comps = []
        for j in range(self.dim):
            acc = sp.Integer(0)
            for i, s in enumerate(self.symbols):
                acc += self.exprs[i] * sp.diff(other.exprs[j], s)
                acc -= other.exprs[i] * sp.diff(self.exprs[j], s)
            comps.append(sp.simplify(acc))
        return SymVectorField(comps, self.symbols)

    def _lambdified(self):
        if self._fn is None:
            self._fn = [sp.lambdify(self.symbols, e, "numpy") for e in self.exprs]
        return self._fn

    def eval_batch(self, points):
        pts = np.asarray(points, dtype=float)
        cols = [pts[..., i] for i in range(self.dim)]
        out = np.empty(pts.shape)
        for j, fn in enumerate(self._lambdified()):
            out[..., j] = np.broadcast_to(fn(*cols), pts.shape[:-1])
        return out

    def jacobian_batch(self, points):
        if self._jac_fn is None:
            self._jac_fn = [
                [sp.lambdify(self.symbols, sp.diff(e, s), "numpy") for s in self.symbols]
                for e in self.exprs
            ]
        pts = np.asarray(points, dtype=float)
        cols = [pts[..., i] for i in range(self.dim)]
        out = np.empty(pts.shape[:-1] + (self.dim, self.dim))
        for j in range(self.dim):
            for l in range(self.dim):
                out[..., j, l] = np.broadcast_to(
                    self._jac_fn[j][l](*cols), pts.shape[:-1]
                )
        return out

    def evaluate(self, point):
        return tuple(float(e.subs(zip(self.symbols, point))) for e in self.exprs)

    def __repr__(self):
        return f"SymVectorField({list(self.exprs)})"
