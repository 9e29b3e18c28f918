"""Pointwise quadratic form, minimal-norm control lift and scalar product.

The form G_x(v) is the least sum of squared coefficients representing v in
the frame at x (+infinity off the span); the lift P_x(v) is the minimizer,
orthogonal to the kernel of the frame matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import SpanError

__all__ = ["MetricEval", "quadratic_form", "min_norm_controls", "scalar_product"]

DEFAULT_SPAN_TOL = 1e-8
PINV_CUTOFF = 1e-12


@dataclass(frozen=True)
class MetricEval:
    """Result of evaluating G_x(v).

    ``value`` is math.inf exactly when v is not in the span (within
    span_tol); it is a tag, not a number to compute with: check ``finite``
    before using ``value`` or ``controls``.
    """

    value: float
    controls: Optional[np.ndarray]
    residual: float

    @property
    def finite(self):
        return math.isfinite(self.value)


def _solve(S, x, v):
    A = S.frame_matrix(x)
    v = np.asarray(v, dtype=float)
    if v.shape != (S.dim,):
        raise ValueError(f"vector of length {v.size} in dimension {S.dim}")
    c, *_ = np.linalg.lstsq(A, v, rcond=PINV_CUTOFF)
    residual = float(np.linalg.norm(A @ c - v))
    return c, residual


def quadratic_form(S, x, v, span_tol=DEFAULT_SPAN_TOL) -> MetricEval:
    """G_x(v) = min sum c_i^2 subject to sum c_i X_i(x) = v."""
    c, residual = _solve(S, x, v)
    scale = float(np.linalg.norm(v)) or 1.0
    if residual > span_tol * scale:
        return MetricEval(math.inf, None, residual)
    return MetricEval(float(np.dot(c, c)), c, residual)

def min_norm_controls(S, x, v, span_tol=DEFAULT_SPAN_TOL) -> np.ndarray:
    """The minimal-norm coefficient vector P_x(v); raises off the span."""
    result = quadratic_form(S, x, v, span_tol)
    if not result.finite:
        raise SpanError(
            f"vector {tuple(np.asarray(v, dtype=float))} is not in the span of the "
            f"frame at {tuple(np.asarray(x, dtype=float))} (residual {result.residual:.3g})"
        )
    return result.controls


def scalar_product(S, x, v, w, span_tol=DEFAULT_SPAN_TOL) -> float:
    """g_x(v, w) = <P_x(v), P_x(w)> by polarization; both arguments must be
    in the span."""
    cv = min_norm_controls(S, x, v, span_tol)
    cw = min_norm_controls(S, x, w, span_tol)
    return float(np.dot(cv, cw))
