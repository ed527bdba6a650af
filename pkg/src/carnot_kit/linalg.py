"""Exact rational linear algebra by fraction-preserving Gaussian elimination."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .numbers import as_fraction


def _rows(matrix) -> list[list[Fraction]]:
    return [[as_fraction(v) for v in row] for row in np.asarray(matrix, dtype=object)]


def row_echelon(matrix) -> tuple[list[list[Fraction]], list[int]]:
    """Reduced row echelon form and the list of pivot columns."""
    rows = _rows(matrix)
    if not rows:
        return rows, []
    n_cols = len(rows[0])
    pivots: list[int] = []
    r = 0
    for c in range(n_cols):
        pivot = next((i for i in range(r, len(rows)) if rows[i][c] != 0), None)
        if pivot is None:
            continue
        rows[r], rows[pivot] = rows[pivot], rows[r]
        inv = 1 / rows[r][c]
        rows[r] = [v * inv for v in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][c] != 0:
                f = rows[i][c]
                rows[i] = [a - f * b for a, b in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
        if r == len(rows):
            break
    return rows, pivots


def rank(matrix) -> int:
    return len(row_echelon(matrix)[1])


def pivot_columns(matrix) -> list[int]:
    return row_echelon(matrix)[1]


def det(matrix) -> Fraction:
    rows = _rows(matrix)
    n = len(rows)
    if any(len(r) != n for r in rows):
        raise ValueError("determinant of a non-square matrix")
    result = Fraction(1)
    for c in range(n):
        pivot = next((i for i in range(c, n) if rows[i][c] != 0), None)
        if pivot is None:
            return Fraction(0)
        if pivot != c:
            rows[c], rows[pivot] = rows[pivot], rows[c]
            result = -result
        result *= rows[c][c]
        for i in range(c + 1, n):
            if rows[i][c] != 0:
                f = rows[i][c] / rows[c][c]
                rows[i] = [a - f * b for a, b in zip(rows[i], rows[c])]
    return result


def solve(matrix, rhs) -> list[Fraction]:
    """Solve a square nonsingular system exactly."""
    a = _rows(matrix)
    n = len(a)
    aug = [row + [as_fraction(b)] for row, b in zip(a, rhs)]
    reduced, pivots = row_echelon(aug)
    if pivots != list(range(n)):
        raise np.linalg.LinAlgError("singular system")
    return [reduced[i][n] for i in range(n)]


def inverse(matrix) -> list[list[Fraction]]:
    a = _rows(matrix)
    n = len(a)
    aug = [row + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(a)]
    reduced, pivots = row_echelon(aug)
    if pivots[:n] != list(range(n)):
        raise np.linalg.LinAlgError("singular matrix")
    return [row[n:] for row in reduced[:n]]
