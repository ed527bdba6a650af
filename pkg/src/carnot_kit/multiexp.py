"""Multiexponential maps ``(u_1, ..., u_p) -> exp(u_1.X) ... exp(u_p.X)``.

Includes the exact differential, the submersion test at constant chains,
the filiform Jacobian minor used in the Vandermonde argument, an openness
probe and the end-point map of piecewise-constant controls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import linalg
from .groups import CarnotGroup, FiliformGroup, GroupError, GroupPoint
from .numbers import EXACT, FLOAT, format_scalar, mode_of, to_mode

RANK_RTOL = 1e-9


def as_chain(g: CarnotGroup, chain, mode: str | None = None) -> np.ndarray:
    """Coerce a chain to an array of shape ``(p, m)`` in the requested mode.

    Float input stays float unless ``mode`` says otherwise; anything else is
    read as exact rationals.
    """
    arr = np.asarray(chain)
    if mode is None:
        mode = FLOAT if arr.dtype.kind == "f" else EXACT
    if arr.ndim == 1:
        arr = arr.reshape(-1, g.m) if arr.size % g.m == 0 else arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != g.m:
        raise GroupError(f"chain entries must have length {g.m}")
    if arr.shape[0] == 0:
        raise GroupError("empty chain")
    return to_mode(arr, mode).reshape(arr.shape)


def prefix_products(g: CarnotGroup, chain: np.ndarray) -> np.ndarray:
    """``P[i] = exp(u_1.X) ... exp(u_i.X)`` for ``i = 0..p`` (``P[0]`` the identity).

    For the three families the increment of the flow of ``u.X`` only depends
    on the first-layer coordinates, which are partial sums of the chain, so
    all increments are evaluated in one batched call and accumulated.
    """
    p, m = chain.shape
    first = np.cumsum(chain, axis=0)
    base = _zero_rows(p, g.n, chain)
    base[1:, :m] = first[:-1]
    incr = g.flow(chain, base) - base
    out = _zero_rows(p + 1, g.n, chain)
    out[1:] = np.cumsum(incr, axis=0)
    return out


def _zero_rows(rows: int, n: int, like: np.ndarray) -> np.ndarray:
    if like.dtype == object:
        return np.full((rows, n), Fraction(0), dtype=object)
    return np.zeros((rows, n))


def gamma(g: CarnotGroup, chain) -> np.ndarray:
    """Left-to-right product of the horizontal exponentials of the chain."""
    u = chain if isinstance(chain, np.ndarray) and chain.ndim == 2 else as_chain(g, chain)
    if u.shape[0] == 0:
        raise GroupError("empty chain")
    out = g.identity(mode_of(u))
    for e in g.exp(u):
        out = g.multiply(out, e)
    return out


def gamma_fast(g: CarnotGroup, chain: np.ndarray) -> np.ndarray:
    return prefix_products(g, chain)[-1]


def gamma_and_jacobian(g: CarnotGroup, chain: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Value and ``n x (m p)`` differential of the multiexponential.

    Column block ``i`` is ``dR(P_{i-1}, S_i) . dL(E_i, S_{i+1}) . dexp(u_i)``
    with prefix products ``P``, suffix products ``S`` and ``E_i = exp(u_i.X)``.
    Exact for object arrays.
    """
    p, m = chain.shape
    P = prefix_products(g, chain)
    value = P[-1]
    E = g.exp(chain)
    S = g.multiply(g.inverse(P), value)  # S[i] = E_{i+1} ... E_p (0-based: S[i] = E[i:]).
    blocks = g.dmul_right(P[:-1], S[:-1]) @ g.dmul_left(E, S[1:]) @ g.dexp(chain)
    jac = np.transpose(blocks, (1, 0, 2)).reshape(g.n, p * m)
    return value, jac


def gamma_jacobian_fd(g: CarnotGroup, chain: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of the float multiexponential."""
    u = np.asarray(chain, dtype=float)
    flat = u.ravel()
    cols = []
    for k in range(flat.size):
        step = np.zeros_like(flat)
        step[k] = h
        plus = gamma_fast(g, (flat + step).reshape(u.shape))
        minus = gamma_fast(g, (flat - step).reshape(u.shape))
        cols.append((plus - minus) / (2 * h))
    return np.stack(cols, axis=1)


def numeric_rank(singular_values: np.ndarray, shape: tuple[int, int], rtol: float = RANK_RTOL) -> tuple[int, float]:
    smax = float(singular_values[0]) if singular_values.size else 0.0
    tol = smax * rtol * max(shape)
    return int(np.sum(singular_values > tol)), tol


@dataclass
class JacobianReport:
    chain: np.ndarray
    matrix: np.ndarray
    singular_values: np.ndarray
    rank: int
    n: int
    tolerance: float
    exact_rank: int | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def is_submersion(self) -> bool:
        return self.rank == self.n

    def to_json(self) -> dict:
        return {
            "rank": self.rank,
            "n": self.n,
            "singular_values": [float(s) for s in self.singular_values],
            "submersion": self.is_submersion,
            "tolerance": self.tolerance,
            "exact_rank": self.exact_rank,
            "chain": [[format_scalar(v) for v in row] for row in self.chain],
            "notes": self.notes,
        }


def gamma_jacobian(g: CarnotGroup, chain, rtol: float = RANK_RTOL) -> JacobianReport:
    """Differential of the multiexponential at ``chain``.

    Rational chains give an exact matrix and an exact rank, which then is the
    reported rank; the numeric rank from the singular values is kept too.
    """
    u = as_chain(g, chain)
    _, jac = gamma_and_jacobian(g, u)
    sv = np.linalg.svd(jac.astype(float), compute_uv=False)
    rank, tol = numeric_rank(sv, jac.shape, rtol)
    report = JacobianReport(u, jac, sv, rank, g.n, tol)
    if u.dtype == object:
        report.exact_rank = linalg.rank(jac)
        if report.exact_rank != rank:
            report.notes.append(f"numeric rank {rank} differs from exact rank {report.exact_rank}")
        report.rank = report.exact_rank
    return report


def submersion_test(g: CarnotGroup, xi, p: int, rtol: float = RANK_RTOL, mode: str | None = None) -> JacobianReport:
    """Rank of the differential at the constant chain ``(xi, ..., xi)``."""
    if p < 1:
        raise ValueError("chain length p must be >= 1")
    xi = np.asarray(xi)
    if mode is None:
        mode = FLOAT if xi.dtype == float else EXACT
    base = to_mode(xi, mode)
    if base.shape != (g.m,):
        raise GroupError(f"xi must have length {g.m}")
    chain = np.stack([base] * p)
    report = gamma_jacobian(g, chain, rtol)
    if not any(base):
        report.notes.append("xi = 0: the constant chain is the identity")
    return report


# -- filiform Jacobian minor ---------------------------------------------


@dataclass
class FiliformMinor:
    p: int
    zeta: tuple[Fraction, Fraction]
    M: np.ndarray
    det: Fraction
    M_hat: np.ndarray
    det_hat: Fraction


def column_integral(k: int, j: int) -> Fraction:
    """``int_0^1 (k + s)^j / j! ds``."""
    return Fraction((k + 1) ** (j + 1) - k ** (j + 1), math.factorial(j + 1))


def filiform_M(p: int, zeta) -> FiliformMinor:
    """Columns ``d/du_1, d/dv_1, ..., d/dv_{p+1}`` of the ``(p+1)``-fold differential.

    The ``v`` columns use the closed-form integrals; the ``u_1`` column is
    read off the exact differential.
    """
    g = FiliformGroup(p)
    xi, eta = (Fraction(v) if not isinstance(v, str) else Fraction(v) for v in zeta)
    chain = np.array([[xi, eta]] * (p + 1), dtype=object)
    _, jac = gamma_and_jacobian(g, chain)
    n = p + 2
    M = np.full((n, n), Fraction(0), dtype=object)
    M[:, 0] = jac[:, 0]
    for k in range(p + 1):
        M[1, 1 + k] = Fraction(1)
        for j in range(1, p + 1):
            M[1 + j, 1 + k] = xi**j * column_integral(k, j)
    M_hat = np.array(
        [[Fraction((k + 1) ** (j + 1) - k ** (j + 1)) for k in range(p + 1)] for j in range(p + 1)],
        dtype=object,
    )
    return FiliformMinor(p, (xi, eta), M, linalg.det(M), M_hat, linalg.det(M_hat))


def vandermonde_det_hat(p: int) -> Fraction:
    """Closed form of ``det M_hat``: summing columns gives ``[(k+1)^(j+1)]``,
    i.e. ``(p+1)!`` times the Vandermonde determinant on ``1..p+1``."""
    value = math.factorial(p + 1)
    for i in range(1, p + 2):
        for k in range(i + 1, p + 2):
            value *= k - i
    return Fraction(value)


# -- openness probe ------------------------------------------------------


@dataclass
class OpennessReport:
    radii: list[float]
    coverage: list[float]
    max_sigma: float
    witnesses: list[dict]

    @property
    def full_coverage(self) -> bool:
        return self.max_sigma > 0

    def to_json(self) -> dict:
        return {
            "radii": self.radii,
            "coverage": self.coverage,
            "max_sigma": self.max_sigma,
            "full_coverage_somewhere": self.full_coverage,
            "witnesses": self.witnesses,
        }


def solve_chain(
    g: CarnotGroup,
    target: np.ndarray,
    center: np.ndarray,
    radius: float,
    rng: np.random.Generator,
    starts: int = 20,
    iterations: int = 200,
) -> tuple[bool, np.ndarray, float]:
    """Damped Gauss-Newton for ``gamma(u) = target`` with ``|u - center| <= radius``."""
    shape = center.shape
    c = center.ravel()
    thresh = 1e-10 * (1 + np.linalg.norm(target))
    best_u, best_res = c.copy(), np.inf

    def project(u):
        d = u - c
        nd = np.linalg.norm(d)
        return u if nd <= radius else c + d * (radius / nd) * (1 - 1e-12)

    for s in range(starts):
        if s == 0:
            u = c.copy()
        else:
            d = rng.standard_normal(c.size)
            u = c + d / np.linalg.norm(d) * radius * rng.uniform() ** (1 / c.size)
        value, jac = gamma_and_jacobian(g, u.reshape(shape))
        r = value - target
        res = np.linalg.norm(r)
        for _ in range(iterations):
            if res < thresh:
                break
            step = -np.linalg.pinv(jac, rcond=1e-12) @ r
            t = 1.0
            for _ in range(30):
                cand = project(u + t * step)
                cval = gamma_fast(g, cand.reshape(shape))
                cres = np.linalg.norm(cval - target)
                if cres < res:
                    break
                t *= 0.5
            else:
                break
            u = cand
            value, jac = gamma_and_jacobian(g, u.reshape(shape))
            r = value - target
            res = np.linalg.norm(r)
        if res < best_res:
            best_u, best_res = u, res
        if res < thresh:
            return True, u.reshape(shape), res
    return False, best_u.reshape(shape), best_res


def openness_probe(
    g: CarnotGroup,
    xi,
    p: int,
    eps: float,
    n_targets: int,
    seed: int,
    radii: list[float] | None = None,
    starts: int = 20,
    iterations: int = 200,
) -> OpennessReport:
    """Evidence for local openness of the multiexponential at ``(xi, ..., xi)``.

    For each radius, targets at that Euclidean distance from the image point
    (the coordinate axes in both signs first, then random directions) are
    solved for within the ``eps``-ball of chains.  ``max_sigma`` is the largest
    radius at which every target was hit.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if n_targets <= 0:
        raise ValueError("n_targets must be positive")
    base = np.tile(np.asarray(xi, dtype=float), (p, 1))
    y0 = gamma_fast(g, base)
    if radii is None:
        radii = [eps * 0.5**k for k in range(1, 9)]
    coverage, witnesses, max_sigma = [], [], 0.0
    for ri, sigma in enumerate(radii):
        hits = 0
        for ti in range(n_targets):
            rng = np.random.default_rng([seed, ri, ti])
            if ti < 2 * g.n:
                d = np.zeros(g.n)
                d[ti // 2] = 1.0 if ti % 2 == 0 else -1.0
            else:
                d = rng.standard_normal(g.n)
                d /= np.linalg.norm(d)
            target = y0 + sigma * d
            ok, u, res = solve_chain(g, target, base, eps, rng, starts, iterations)
            if ok:
                hits += 1
            else:
                witnesses.append({"radius": sigma, "direction": d.tolist(), "residual": float(res)})
        coverage.append(hits / n_targets)
        if hits == n_targets:
            max_sigma = max(max_sigma, sigma)
    return OpennessReport(list(map(float, radii)), coverage, float(max_sigma), witnesses)


# -- end-point map -------------------------------------------------------


def endpoint_map(g: CarnotGroup, controls) -> np.ndarray:
    """Time-one end point of ``gamma' = sum_j u_j(t) X_j(gamma)``, ``gamma(0) = 0``,
    for controls constant on ``N`` equal segments; integrates the field flows."""
    u = np.asarray(controls)
    if u.ndim != 2 or u.shape[0] < 1 or u.shape[1] != g.m:
        raise GroupError(f"controls must have shape (N, {g.m}) with N >= 1")
    mode = mode_of(u) if u.dtype in (object, float) else EXACT
    u = to_mode(u, mode).reshape(u.shape)
    N = u.shape[0]
    scale = Fraction(1, N) if mode == EXACT else 1.0 / N
    x = g.identity(mode)
    for row in u:
        x = g.flow(row * scale, x)
    return x


def endpoint_jacobian(g: CarnotGroup, controls) -> np.ndarray:
    """``n x (m N)`` differential of the end-point map on the piecewise-constant slice."""
    u = np.asarray(controls)
    mode = mode_of(u) if u.dtype in (object, float) else EXACT
    u = to_mode(u, mode).reshape(u.shape)
    N = u.shape[0]
    scale = Fraction(1, N) if mode == EXACT else 1.0 / N
    _, jac = gamma_and_jacobian(g, u * scale)
    return jac * scale
