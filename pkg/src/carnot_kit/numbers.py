"""Scalar helpers for the two numeric modes.

Exact mode stores coordinates as ``numpy`` object arrays of
:class:`fractions.Fraction`; float mode uses ``float64`` arrays.  The
:class:`Surd` type extends the rationals by finitely many square roots so
that the step-two chain solver can stay exact.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Iterable, Mapping

import numpy as np
from sympy import factorint

EXACT = "exact"
FLOAT = "float"
MODES = (EXACT, FLOAT)


def as_fraction(value) -> Fraction:
    """Convert ints, Fractions, ``"num/den"`` strings or floats to a Fraction."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, (float, np.floating)):
        return Fraction(float(value))
    raise TypeError(f"cannot convert {value!r} to an exact rational")


def exact_array(values: Iterable) -> np.ndarray:
    return np.array([as_fraction(v) for v in values], dtype=object)


def float_array(values: Iterable) -> np.ndarray:
    return np.array([float(v) for v in values], dtype=float)


def mode_of(arr: np.ndarray) -> str:
    return EXACT if arr.dtype == object else FLOAT


def to_mode(arr, mode: str) -> np.ndarray:
    if mode == EXACT:
        return exact_array(np.ravel(arr))
    if mode == FLOAT:
        return float_array(np.ravel(arr))
    raise ValueError(f"unknown numeric mode {mode!r}")


def zeros(n: int, mode: str) -> np.ndarray:
    if mode == EXACT:
        return np.array([Fraction(0)] * n, dtype=object)
    return np.zeros(n)


def format_scalar(value) -> str | float:
    """Serialize a scalar: rationals as ``"num/den"``, floats unchanged."""
    if isinstance(value, Fraction):
        if value.denominator == 1:
            return str(value.numerator)
        return f"{value.numerator}/{value.denominator}"
    if isinstance(value, Surd):
        return str(value)
    return float(value)


def factorial_fraction(k: int) -> Fraction:
    return Fraction(math.factorial(k))


def _squarefree_split(q: Fraction) -> tuple[int, Fraction]:
    """Write a positive rational as ``r**2 * s`` with ``s`` a squarefree int."""
    # sqrt(a/b) = sqrt(a*b) / b
    square, rest = 1, 1
    for prime, power in factorint(q.numerator * q.denominator).items():
        square *= prime ** (power // 2)
        if power % 2:
            rest *= prime
    return rest, Fraction(square, q.denominator)


class Surd:
    """Element of Q(sqrt(p_1), ..., sqrt(p_k)) for squarefree integers p_i.

    Stored as a map from squarefree radicands to rational coefficients, so
    ``3 + 2*sqrt(6)`` is ``{1: 3, 6: 2}``.  Products multiply radicands and
    pull out square factors, which keeps everything exact.
    """

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[int, Fraction] | None = None):
        clean = {}
        for rad, coef in (terms or {}).items():
            coef = as_fraction(coef)
            if coef:
                clean[rad] = clean.get(rad, Fraction(0)) + coef
        self.terms = {r: c for r, c in clean.items() if c}

    @classmethod
    def sqrt(cls, q) -> "Surd":
        q = as_fraction(q)
        if q < 0:
            raise ValueError("square root of a negative rational")
        if q == 0:
            return cls()
        rad, coef = _squarefree_split(q)
        return cls({rad: coef})

    @classmethod
    def coerce(cls, value) -> "Surd":
        if isinstance(value, Surd):
            return value
        return cls({1: as_fraction(value)})

    def __add__(self, other):
        other = Surd.coerce(other)
        out = dict(self.terms)
        for rad, coef in other.terms.items():
            out[rad] = out.get(rad, Fraction(0)) + coef
        return Surd(out)

    __radd__ = __add__

    def __neg__(self):
        return Surd({r: -c for r, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-Surd.coerce(other))

    def __rsub__(self, other):
        return Surd.coerce(other) - self

    def __mul__(self, other):
        other = Surd.coerce(other)
        out: dict[int, Fraction] = {}
        for r1, c1 in self.terms.items():
            for r2, c2 in other.terms.items():
                g = math.gcd(r1, r2)
                rad = (r1 // g) * (r2 // g)
                out[rad] = out.get(rad, Fraction(0)) + c1 * c2 * g
        return Surd(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Surd):
            if set(other.terms) - {1}:
                raise ZeroDivisionError("division by an irrational surd is not supported")
            other = other.terms.get(1, Fraction(0))
        other = as_fraction(other)
        return Surd({r: c / other for r, c in self.terms.items()})

    def __eq__(self, other):
        try:
            other = Surd.coerce(other)
        except TypeError:
            return NotImplemented
        return self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __float__(self):
        return float(sum(float(c) * math.sqrt(r) for r, c in self.terms.items()))

    def __abs__(self):
        return self if float(self) >= 0 else -self

    def __bool__(self):
        return bool(self.terms)

    def is_rational(self) -> bool:
        return set(self.terms) <= {1}

    def rational(self) -> Fraction:
        if not self.is_rational():
            raise ValueError(f"{self} is irrational")
        return self.terms.get(1, Fraction(0))

    def __repr__(self):
        return f"Surd({self})"

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        for rad in sorted(self.terms):
            c = format_scalar(self.terms[rad])
            parts.append(str(c) if rad == 1 else f"{c}*sqrt({rad})")
        return " + ".join(parts)
