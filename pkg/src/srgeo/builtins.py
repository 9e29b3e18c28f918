"""Built-in structure library.

Each entry matches its usual definition field-by-field:

* ``euclidean:n``      -- the coordinate frame d1..dn on R^n
* ``heisenberg``       -- X1 = d1 - x2/2 d3, X2 = d2 + x1/2 d3
* ``grushin``          -- X1 = d1, X2 = x1 d2
* ``grushin_alpha:a``  -- X1 = d1, X2 = x1^a d2 (integer a >= 1)
* ``singruppo``        -- Heisenberg pair plus X3 = x3^2 d3
* ``rototranslation``  -- X1 = cos(x3) d1 + sin(x3) d2, X2 = d3 (trig frame)
* ``contact_corank1_standard:n`` -- Darboux frame on R^n, n odd
"""

from __future__ import annotations

from fractions import Fraction

import sympy as sp

from .fields import PolyVectorField
from .fields_sym import SymVectorField
from .poly import Polynomial
from .structure import SubRiemannianStructure

__all__ = ["BUILTIN_NAMES", "make_structure"]


def euclidean(n):
    frame = [PolyVectorField.coordinate(j, n) for j in range(n)]
    return SubRiemannianStructure(n, frame, name=f"euclidean:{n}")


def heisenberg():
    n = 3
    x1 = Polynomial.variable(0, n)
    x2 = Polynomial.variable(1, n)
    zero = Polynomial.zero(n)
    one = Polynomial.constant(1, n)
    X1 = PolyVectorField([one, zero, x2 * Fraction(-1, 2)])
    X2 = PolyVectorField([zero, one, x1 * Fraction(1, 2)])
    return SubRiemannianStructure(n, [X1, X2], name="heisenberg")


def grushin():
    return grushin_alpha(1, name="grushin")


def grushin_alpha(alpha, name=None):
    alpha = int(alpha)
    if alpha < 1:
        raise ValueError("alpha must be a positive integer")
    n = 2
    zero = Polynomial.zero(n)
    one = Polynomial.constant(1, n)
    X1 = PolyVectorField([one, zero])
    X2 = PolyVectorField([zero, Polynomial.variable(0, n) ** alpha])
    return SubRiemannianStructure(n, [X1, X2], name=name or f"grushin_alpha:{alpha}")


def singruppo():
    base = heisenberg()
    n = 3
    zero = Polynomial.zero(n)
    x3 = Polynomial.variable(2, n)
    X3 = PolyVectorField([zero, zero, x3 * x3])
    return SubRiemannianStructure(n, list(base.frame) + [X3], name="singruppo")


def rototranslation():
    syms = SymVectorField.coordinates(3)
    theta = syms[2]
    X1 = SymVectorField([sp.cos(theta), sp.sin(theta), 0], syms)
    X2 = SymVectorField([0, 0, 1], syms)
    return SubRiemannianStructure(3, [X1, X2], name="rototranslation")


def contact_corank1_standard(n=5):
    """Darboux frame on R^n (n odd): X_{2i-1} = d_{2i-1},
    X_{2i} = d_{2i} + x_{2i-1} d_n."""
    n = int(n)
    if n < 3 or n % 2 == 0:
        raise ValueError("contact structures need odd dimension >= 3")
    k = (n - 1) // 2
    zero = Polynomial.zero(n)
    frame = []
    for i in range(k):
        comps = [zero] * n
        comps[2 * i] = Polynomial.constant(1, n)
        frame.append(PolyVectorField(comps))
        comps = [zero] * n
        comps[2 * i + 1] = Polynomial.constant(1, n)
        comps[n - 1] = Polynomial.variable(2 * i, n)
        frame.append(PolyVectorField(comps))
    return SubRiemannianStructure(n, frame, name=f"contact_corank1_standard:{n}")


_FACTORIES = {
    "euclidean": (euclidean, 2),
    "heisenberg": (heisenberg, None),
    "grushin": (grushin, None),
    "grushin_alpha": (grushin_alpha, 2),
    "singruppo": (singruppo, None),
    "rototranslation": (rototranslation, None),
    "contact_corank1_standard": (contact_corank1_standard, 5),
}

BUILTIN_NAMES = tuple(sorted(_FACTORIES))


def make_structure(spec):
    """Build a structure from 'name' or 'name:param' (e.g. 'euclidean:2')."""
    name, _, param = spec.partition(":")
    if name not in _FACTORIES:
        raise KeyError(
            f"unknown structure {name!r}; built-ins: {', '.join(BUILTIN_NAMES)}"
        )
    factory, default = _FACTORIES[name]
    if param:
        return factory(int(param))
    if default is not None:
        return factory(default)
    return factory()
