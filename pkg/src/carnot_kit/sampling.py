"""Seeded random rationals, points and step-two descriptors."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .groups import CarnotGroup, GroupError, StepTwoGroup


def random_rationals(rng: np.random.Generator, shape, den: int = 12, span: int = 2) -> np.ndarray:
    """Object array of Fractions ``k / d`` with ``|k/d| <= span`` and ``1 <= d <= den``."""
    shape = (shape,) if isinstance(shape, int) else tuple(shape)
    size = int(np.prod(shape)) if shape else 1
    d = rng.integers(1, den + 1, size=size)
    k = rng.integers(-span * d, span * d + 1)
    vals = [Fraction(int(a), int(b)) for a, b in zip(k, d)]
    return np.array(vals, dtype=object).reshape(shape)


def random_point(g: CarnotGroup, rng: np.random.Generator, den: int = 12, span: int = 2) -> np.ndarray:
    return random_rationals(rng, g.n, den, span)


def random_step_two(rng: np.random.Generator, m: int, l: int, span: int = 3, tries: int = 100) -> StepTwoGroup:
    """Random bracket-generating integer ``Q`` of shape ``(l, m, m)``."""
    if l < 1 or l > m * (m - 1) // 2:
        raise GroupError("need 1 <= l <= m(m-1)/2")
    for _ in range(tries):
        Q = np.zeros((l, m, m), dtype=object)
        for a in range(l):
            for j in range(m):
                for k in range(j + 1, m):
                    v = int(rng.integers(-span, span + 1))
                    Q[a, j, k], Q[a, k, j] = Fraction(v), Fraction(-v)
        try:
            return StepTwoGroup(Q, name=f"random-{m}-{l}")
        except GroupError:
            continue
    raise GroupError("could not draw a bracket-generating descriptor")
