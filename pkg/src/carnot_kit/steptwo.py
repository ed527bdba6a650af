"""Constructive chain corrections in step-two groups.

Given ``(z, t)``, :func:`solve_correction` returns ``u_1..u_p`` with

    sum u_j = z,    sum j u_j = (1 + 2p)/2 z,    sum_{j<k} Q(u_j, u_k) = t,

and ``sum |u_j| <= C (|z| + |t|^(1/2))``.  The construction works in the
partial sums ``v_k = u_1 + ... + u_k`` where the quadratic constraint
becomes ``sum_k Q(v_k, v_{k+1}) = t``; one decoupled pair of slots per
basis vector ``Q(e_j, e_k)`` realizes one coefficient of ``t``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

import numpy as np

from . import linalg
from .groups import GroupError, StepTwoGroup
from .multiexp import gamma
from .numbers import EXACT, FLOAT, Surd, as_fraction, format_scalar


@dataclass
class BasisPairs:
    pairs: list[tuple[int, int]]  # 0-based (j, k), j < k
    matrix: np.ndarray  # columns Q(e_j, e_k)
    inverse: np.ndarray

    def to_json(self) -> dict:
        return {"pairs": [[j + 1, k + 1] for j, k in self.pairs]}


def basis_pairs(g: StepTwoGroup) -> BasisPairs:
    """Greedy lexicographic choice of pairs whose brackets form a basis of R^l."""
    if not isinstance(g, StepTwoGroup):
        raise GroupError("basis pairs need a step-two group")
    chosen: list[tuple[int, int]] = []
    cols: list[np.ndarray] = []
    for j, k in combinations(range(g.m), 2):
        col = g.Q[:, j, k]
        if linalg.rank(np.stack(cols + [col], axis=1)) == len(cols) + 1:
            chosen.append((j, k))
            cols.append(col)
            if len(cols) == g.l:
                break
    if len(cols) < g.l:
        raise GroupError("not bracket-generating")
    B = np.stack(cols, axis=1)
    return BasisPairs(chosen, B, np.array(linalg.inverse(B), dtype=object))


def choose_p(g: StepTwoGroup) -> int:
    """Chain length ``p = 6 + 3 l`` (``h = l`` decoupled slots)."""
    return 6 + 3 * g.l


def bound_constant(g: StepTwoGroup, pairs: BasisPairs | None = None) -> float:
    """A constant ``C`` with ``sum |u_j| <= C (|z| + |t|^(1/2))`` for this construction.

    Each slot has ``|v| = sqrt|c_a|`` with ``c = B^{-1} t``; every ``v_k`` enters
    at most two ``u``'s, so ``sum |u| <= 8 sum_a sqrt|c_a| + 3|z|``.
    """
    pairs = pairs or basis_pairs(g)
    binv = np.linalg.norm(pairs.inverse.astype(float), 2)
    return max(3.0, 8.0 * g.l**0.75 * np.sqrt(binv))


@dataclass
class CorrectionChain:
    p: int
    u: np.ndarray  # (p, m)
    v: np.ndarray  # (p, m) partial sums
    coefficients: list  # basis coefficients of t
    mode: str
    z: np.ndarray
    t: np.ndarray
    xi: np.ndarray | None = None
    residual: float | None = None
    exact_match: bool | None = None

    @property
    def norm_sum(self) -> float:
        return float(sum(np.linalg.norm(row.astype(float)) for row in self.u))

    @property
    def scale(self) -> float:
        """``|z| + |t|^(1/2)``."""
        return float(np.linalg.norm(self.z.astype(float)) + np.linalg.norm(self.t.astype(float)) ** 0.5)

    def chain(self) -> np.ndarray:
        """``xi + u_j`` (requires ``xi``)."""
        if self.xi is None:
            raise ValueError("no base direction attached")
        return self.u + self.xi

    def to_json(self) -> dict:
        out = {
            "p": self.p,
            "mode": self.mode,
            "u": [[format_scalar(x) for x in row] for row in self.u],
            "sum_norm_u": self.norm_sum,
            "z_norm_plus_sqrt_t": self.scale,
        }
        if self.xi is not None:
            out["chain"] = [[format_scalar(x) for x in row] for row in self.chain()]
            out["chain_length"] = float(sum(np.linalg.norm(r.astype(float)) for r in self.chain()))
            out["reconstruction_residual"] = self.residual
            out["exact_match"] = self.exact_match
        return out


def _coerce(vec, size: int, mode: str) -> np.ndarray:
    arr = np.asarray(vec).ravel()
    if arr.shape != (size,):
        raise GroupError(f"expected a vector of length {size}")
    if mode == EXACT:
        return np.array([as_fraction(x) for x in arr], dtype=object)
    return arr.astype(float)


def solve_correction(g: StepTwoGroup, z, t, mode: str = EXACT, pairs: BasisPairs | None = None) -> CorrectionChain:
    """Solve the decoupled system for ``(u_1, ..., u_p)``; ``xi`` does not enter.

    In exact mode square roots are kept as :class:`Surd` values so all three
    equations hold exactly.
    """
    if not isinstance(g, StepTwoGroup):
        raise GroupError("solver needs a step-two group")
    pairs = pairs or basis_pairs(g)
    z = _coerce(z, g.m, mode)
    t = _coerce(t, g.l, mode)
    p = choose_p(g)
    m = g.m
    if mode == EXACT:
        zero = Surd()
        c = pairs.inverse @ t
        root = Surd.sqrt
        sign = lambda x: 1 if x >= 0 else -1  # noqa: E731
        half = Fraction(1, 2)
    else:
        zero = 0.0
        c = pairs.inverse.astype(float) @ t
        root = lambda x: float(np.sqrt(abs(x)))  # noqa: E731
        sign = lambda x: 1.0 if x >= 0 else -1.0  # noqa: E731
        half = 0.5

    v = np.full((p + 1, m), zero, dtype=object if mode == EXACT else float)  # v[0] = 0
    for i, (ca, (j, k)) in enumerate(zip(c, pairs.pairs)):
        r = root(abs(ca))
        v[3 * i + 1, j] = sign(ca) * r
        v[3 * i + 2, k] = r
    # v[p-3] = v[p-1] = 0 already
    v[p] = z if mode == FLOAT else np.array([Surd.coerce(x) for x in z], dtype=object)
    v[p - 2] = -v[p] * half - v[1 : p - 3].sum(axis=0)
    u = v[1:] - v[:-1]
    return CorrectionChain(p, u, v[1:], list(c), mode, z, t)


def solve_full(g: StepTwoGroup, xi, z, t, mode: str = EXACT) -> CorrectionChain:
    """Chain ``xi + u_j`` with ``Gamma(xi + u) = (p xi, 0) (z, t)``, verified."""
    sol = solve_correction(g, z, t, mode)
    sol.xi = _coerce(xi, g.m, mode)
    target = target_point(g, sol.p, sol.xi, sol.z, sol.t)
    got = gamma(g, sol.chain())
    diff = got - target
    sol.residual = float(np.linalg.norm(diff.astype(float)))
    if mode == EXACT:
        sol.exact_match = bool(all(Surd.coerce(d) == 0 for d in diff))
    return sol


def target_point(g: StepTwoGroup, p: int, xi, z, t) -> np.ndarray:
    """``(p xi, 0) . (z, t) = (p xi + z, t + Q(p xi, z))``."""
    w = xi * p
    return g.multiply(np.concatenate([w, t * 0]), np.concatenate([z, t]))


def chain_upper_bound(g: StepTwoGroup, w, z, t, mode: str = FLOAT) -> float:
    """Length ``sum_j |xi + u_j|`` of the corrected chain, an upper bound on
    ``d((w, 0) . (z, t))``."""
    w = _coerce(w, g.m, mode)
    if not any(w):
        raise GroupError("w must be nonzero")
    p = choose_p(g)
    sol = solve_correction(g, z, t, mode)
    xi = w / p if mode == FLOAT else np.array([x / p for x in w], dtype=object)
    return float(sum(np.linalg.norm((xi + row).astype(float)) for row in sol.u))
