"""Text grammar for polynomials and polynomial vector fields.

Field directions are named ``d1..dn``, variables ``x1..xn``, rational
literals are ``p/q`` or plain integers, and the operators are ``+ - *``
with unary minus (parenthesized groups are also accepted).  Example::

    X1 = d1 - 1/2*x2*d3

Parsing is whitespace-insensitive and errors carry line/column positions.
Formatting round-trips: ``parse(format(obj)) == obj``.
"""

from __future__ import annotations

import re
from fractions import Fraction

from .errors import ParseError
from .poly import Polynomial

__all__ = [
    "parse_polynomial",
    "parse_vector_field",
    "format_polynomial",
    "format_vector_field",
]

_TOKEN_RE = re.compile(r"\s*(?:(\d+)|([xd])(\d+)|([+\-*/()])|(\S))")


def _tokenize(text):
    tokens = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            break
        tok_text = m.group(0).lstrip()
        skipped = m.group(0)[: len(m.group(0)) - len(tok_text)]
        for ch in skipped:
            if ch == "\n":
                line, col = line + 1, 1
            else:
                col += 1
        if m.group(1):
            tokens.append(("int", int(m.group(1)), line, col))
        elif m.group(2):
            tokens.append((m.group(2), int(m.group(3)), line, col))
        elif m.group(4):
            tokens.append((m.group(4), m.group(4), line, col))
        else:
            raise ParseError(f"unexpected character {m.group(5)!r}", line, col)
        col += len(tok_text)
        pos = m.end()
    tokens.append(("end", None, line, col))
    return tokens


class _Value:
    """Either a scalar polynomial or a first-order expression in the d's.

    ``scalar`` is a Polynomial; ``dirs`` maps direction index -> Polynomial.
    Products of two direction factors are rejected.
    """

    __slots__ = ("scalar", "dirs")

    def __init__(self, scalar, dirs=None):
        self.scalar = scalar
        self.dirs = dirs or {}


class _Parser:
    def __init__(self, text, nvars):
        self.tokens = _tokenize(text)
        self.nvars = nvars
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        t = self.tokens[self.i]
        self.i += 1
        return t

    def error(self, message, tok=None):
        tok = tok or self.peek()
        raise ParseError(message, tok[2], tok[3])

    def parse_expr(self):
        kind, _, _, _ = self.peek()
        sign = 1
        while kind in ("+", "-"):
            if kind == "-":
                sign = -sign
            self.next()
            kind = self.peek()[0]
        value = self._scaled(self.parse_term(), sign)
        while True:
            kind = self.peek()[0]
            if kind not in ("+", "-"):
                break
            sign = 1 if kind == "+" else -1
            self.next()
            while self.peek()[0] in ("+", "-"):
                if self.peek()[0] == "-":
                    sign = -sign
                self.next()
            rhs = self._scaled(self.parse_term(), sign)
            value = self._add(value, rhs)
        return value

    def parse_term(self):
        value = self.parse_factor()
        while self.peek()[0] == "*":
            op = self.next()
            rhs = self.parse_factor()
            value = self._mul(value, rhs, op)
        return value

    def parse_factor(self):
        kind, payload, line, col = self.peek()
        if kind == "int":
            self.next()
            num = payload
            if self.peek()[0] == "/":
                self.next()
                dkind, den, dline, dcol = self.next()
                if dkind != "int":
                    raise ParseError("expected an integer denominator", dline, dcol)
                if den == 0:
                    raise ParseError("zero denominator", dline, dcol)
                return _Value(Polynomial.constant(Fraction(num, den), self.nvars))
            return _Value(Polynomial.constant(num, self.nvars))
        if kind == "x":
            self.next()
            if not 1 <= payload <= self.nvars:
                raise ParseError(
                    f"variable x{payload} out of range for dimension {self.nvars}",
                    line,
                    col,
                )
            return _Value(Polynomial.variable(payload - 1, self.nvars))
        if kind == "d":
            self.next()
            if not 1 <= payload <= self.nvars:
                raise ParseError(
                    f"direction d{payload} out of range for dimension {self.nvars}",
                    line,
                    col,
                )
            return _Value(
                Polynomial.zero(self.nvars),
                {payload - 1: Polynomial.constant(1, self.nvars)},
            )
        if kind == "(":
            self.next()
            value = self.parse_expr()
            closing = self.next()
            if closing[0] != ")":
                raise ParseError("expected ')'", closing[2], closing[3])
            return value
        if kind == "-":
            self.next()
            return self._scaled(self.parse_factor(), -1)
        self.error(f"expected a number, x<k>, d<k> or '(', got {kind!r}")

    @staticmethod
    def _scaled(value, sign):
        if sign == 1:
            return value
        return _Value(
            -value.scalar, {j: -p for j, p in value.dirs.items()}
        )

    @staticmethod
    def _add(a, b):
        dirs = dict(a.dirs)
        for j, p in b.dirs.items():
            dirs[j] = dirs[j] + p if j in dirs else p
        return _Value(a.scalar + b.scalar, dirs)

    def _mul(self, a, b, op_tok):
        if a.dirs and b.dirs:
            raise ParseError(
                "product of two field directions is not allowed", op_tok[2], op_tok[3]
            )
        if b.dirs:
            a, b = b, a
        return _Value(
            a.scalar * b.scalar, {j: p * b.scalar for j, p in a.dirs.items()}
        )


def parse_polynomial(text, nvars):
    """Parse a pure polynomial (no d's) in ``nvars`` variables."""
    parser = _Parser(text, nvars)
    value = parser.parse_expr()
    end = parser.next()
    if end[0] != "end":
        raise ParseError(f"unexpected trailing {end[0]!r}", end[2], end[3])
    if value.dirs:
        j = sorted(value.dirs)[0]
        raise ParseError(f"direction d{j + 1} not allowed in a polynomial", 1, 1)
    return value.scalar


def parse_vector_field(text, nvars):
    """Parse a PolyVectorField expression in ``nvars`` variables."""
    from .fields import PolyVectorField

    parser = _Parser(text, nvars)
    value = parser.parse_expr()
    end = parser.next()
    if end[0] != "end":
        raise ParseError(f"unexpected trailing {end[0]!r}", end[2], end[3])
    if not value.scalar.is_zero:
        raise ParseError("term without a direction factor d<k>", 1, 1)
    coeffs = [value.dirs.get(j, Polynomial.zero(nvars)) for j in range(nvars)]
    return PolyVectorField(coeffs)


def _format_monomial(coef, exponents, tail=None):
    factors = []
    for i, e in enumerate(exponents):
        factors.extend([f"x{i + 1}"] * e)
    if tail is not None:
        factors.append(tail)
    c = coef
    if not factors:
        return str(abs(c)), c < 0
    if c == 1:
        return "*".join(factors), False
    if c == -1:
        return "*".join(factors), True
    return f"{abs(c)}*" + "*".join(factors), c < 0


def _join_terms(parts):
    out = []
    for k, (body, negative) in enumerate(parts):
        if k == 0:
            out.append(("-" if negative else "") + body)
        else:
            out.append(("- " if negative else "+ ") + body)
    return " ".join(out) if out else "0"


def format_polynomial(p):
    parts = [_format_monomial(coef, expo) for expo, coef in p.terms()]
    return _join_terms(parts)


def format_vector_field(field):
    parts = []
    for j, comp in enumerate(field.coeffs):
        for expo, coef in comp.terms():
            parts.append(_format_monomial(coef, expo, tail=f"d{j + 1}"))
    return _join_terms(parts)
