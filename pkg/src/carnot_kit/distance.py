"""Numerical sub-Riemannian distance: an upper-bound oracle over piecewise-constant controls.

``distance_estimate`` minimizes the control energy ``sum |u_j|^2 / (2N)``
subject to the end-point constraint with an augmented Lagrangian whose inner
problems are solved by damped Gauss-Newton.  The reported value is the length
``sum |u_j| / N`` of the feasible control it finds, hence an upper bound on
the distance (up to the end-point residual).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .groups import CarnotGroup
from .multiexp import gamma_and_jacobian, gamma_fast

# augmented Lagrangian schedule
AL_MU0 = 10.0
AL_GROWTH = 10.0
AL_OUTER = 8
INNER_GTOL = 1e-12
INNER_MAXITER = 60
FEAS_TOL = 1e-12
DEFAULT_RESTARTS = 16


@dataclass
class DistanceEstimate:
    value: float
    controls: np.ndarray  # (N, m)
    residual: float
    status: str  # "upper-bound" or "failed"
    target: np.ndarray
    starts: list[float] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == "upper-bound"

    @property
    def N(self) -> int:
        return self.controls.shape[0]

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "residual": self.residual,
            "status": self.status,
            "N": self.N,
            "target": [float(v) for v in self.target],
        }


def length(controls: np.ndarray) -> float:
    return float(np.linalg.norm(controls, axis=1).sum() / controls.shape[0])


def endpoint_float(g: CarnotGroup, controls: np.ndarray) -> np.ndarray:
    return gamma_fast(g, controls / controls.shape[0])


def _endpoint_and_jac(g: CarnotGroup, controls: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    N = controls.shape[0]
    value, jac = gamma_and_jacobian(g, controls / N)
    return value, jac / N


def _min_norm_step(J: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """``J^T (J J^T)^{-1} rhs`` with a least-squares fallback."""
    K = J @ J.T
    try:
        return J.T @ np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        return J.T @ np.linalg.lstsq(K, rhs, rcond=None)[0]


def project_feasible(g: CarnotGroup, controls: np.ndarray, target: np.ndarray, iters: int = 30) -> tuple[np.ndarray, float]:
    """Newton projection onto the end-point constraint (minimum-norm corrections)."""
    u = controls.copy()
    value, J = _endpoint_and_jac(g, u)
    res = np.linalg.norm(value - target)
    for _ in range(iters):
        if res <= FEAS_TOL * (1 + np.linalg.norm(target)):
            break
        step = -_min_norm_step(J, value - target).reshape(u.shape)
        t = 1.0
        for _ in range(30):
            cand = u + t * step
            cval = endpoint_float(g, cand)
            cres = np.linalg.norm(cval - target)
            if cres < res:
                break
            t *= 0.5
        else:
            break
        u = cand
        value, J = _endpoint_and_jac(g, u)
        res = np.linalg.norm(value - target)
    return u, float(res)


def augmented_lagrangian(g: CarnotGroup, target: np.ndarray, u0: np.ndarray, outer: int = AL_OUTER) -> np.ndarray:
    """Minimize ``|u|^2/(2N)`` subject to ``endpoint(u) = target`` from ``u0``."""
    N = u0.shape[0]
    a = 1.0 / N
    shape = u0.shape
    # start feasible with least-squares multipliers, so the first penalized
    # subproblem cannot collapse onto the degenerate control u = 0
    u0, _ = project_feasible(g, u0, target)
    u = u0.ravel().copy()
    _, J0 = _endpoint_and_jac(g, u0)
    lam = -np.linalg.lstsq(J0.T, a * u, rcond=None)[0]
    mu = AL_MU0

    def merit(vec, c):
        return 0.5 * a * vec @ vec + lam @ c + 0.5 * mu * c @ c

    for _ in range(outer):
        value, J = _endpoint_and_jac(g, u.reshape(shape))
        c = value - target
        for _ in range(INNER_MAXITER):
            grad = a * u + J.T @ (lam + mu * c)
            if np.linalg.norm(grad) < INNER_GTOL:
                break
            # (a I + mu J^T J) d = -grad, via the n x n system
            K = (a / mu) * np.eye(g.n) + J @ J.T
            Jg = J @ grad
            try:
                d = -(grad - J.T @ np.linalg.solve(K, Jg)) / a
            except np.linalg.LinAlgError:
                d = -grad / a
            f0 = merit(u, c)
            slope = grad @ d
            t = 1.0
            for _ in range(40):
                cand = u + t * d
                cc = endpoint_float(g, cand.reshape(shape)) - target
                if merit(cand, cc) <= f0 + 1e-4 * t * slope:
                    break
                t *= 0.5
            else:
                break
            u = cand
            value, J = _endpoint_and_jac(g, u.reshape(shape))
            c = value - target
        lam = lam + mu * c
        mu *= AL_GROWTH
    return u.reshape(shape)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("CARNOT_KIT_THREADS", "1")))
    except ValueError:
        return 1


def optimize_controls(
    g: CarnotGroup,
    target: np.ndarray,
    N: int,
    restarts: int = DEFAULT_RESTARTS,
    seed: int = 0,
    initial: list[np.ndarray] | None = None,
    normalize: bool = True,
) -> DistanceEstimate:
    """Best feasible control over multistarts (plus any supplied initial guesses).

    With ``normalize`` the problem is solved at unit homogeneous norm, so the
    residual is relative to the scale of the target.
    """
    target = np.asarray(target, dtype=float)
    if np.linalg.norm(target) == 0:
        return DistanceEstimate(0.0, np.zeros((N, g.m)), 0.0, "upper-bound", target, [0.0])
    if normalize:
        # solve for delta_{1/rho} target, rho = N(target), and rescale: d is 1-homogeneous
        rho = homogeneous_norm(g, target)
        init = [np.asarray(u, dtype=float) / rho for u in (initial or [])]
        est = optimize_controls(g, g.dilate(1.0 / rho, target), N, restarts, seed, init, normalize=False)
        return DistanceEstimate(
            rho * est.value, rho * est.controls, est.residual, est.status, target, [rho * v for v in est.starts]
        )
    scale = homogeneous_norm(g, target)
    guesses = [np.asarray(u, dtype=float) for u in (initial or [])]
    guesses = [_resample(u, N) for u in guesses]
    for k in range(restarts):
        rng = np.random.default_rng([seed, k])
        guesses.append(scale * rng.standard_normal((N, g.m)))

    def run(u0):
        u = augmented_lagrangian(g, target, u0)
        u, res = project_feasible(g, u, target)
        return u, res

    workers = _threads()
    if workers > 1 and len(guesses) > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, guesses))
    else:
        results = [run(u0) for u0 in guesses]

    thresh = 1e-9 * (1 + np.linalg.norm(target))
    values = [length(u) if res <= thresh else math.inf for u, res in results]
    best = int(np.argmin(values)) if np.isfinite(min(values)) else int(np.argmin([r for _, r in results]))
    u, res = results[best]
    status = "upper-bound" if res <= thresh else "failed"
    return DistanceEstimate(length(u), u, res, status, target, values)


def _resample(u: np.ndarray, N: int) -> np.ndarray:
    """Piecewise-constant control on ``N`` segments tracing the same path when possible."""
    M = u.shape[0]
    if M == N:
        return u.copy()
    if N % M == 0:
        return np.repeat(u, N // M, axis=0)
    idx = np.minimum((np.arange(N) + 0.5) * M / N, M - 1).astype(int)
    return u[idx]


def distance_estimate(
    g: CarnotGroup,
    a,
    b,
    N: int = 32,
    restarts: int = DEFAULT_RESTARTS,
    seed: int = 0,
    initial: list[np.ndarray] | None = None,
    normalize: bool = True,
) -> DistanceEstimate:
    """Upper-bound estimate of ``d(a, b) = d(0, a^{-1} b)``."""
    if N < 4:
        raise ValueError("need at least 4 segments")
    a = np.asarray(getattr(a, "coords", a), dtype=float)
    b = np.asarray(getattr(b, "coords", b), dtype=float)
    target = g.multiply(g.inverse(a), b)
    return optimize_controls(g, target, N, restarts, seed, initial, normalize)


def refine(g: CarnotGroup, est: DistanceEstimate, N: int, restarts: int = 0, seed: int = 0) -> DistanceEstimate:
    """Re-solve on a finer grid, warm-started from a coarser estimate."""
    return optimize_controls(g, est.target, N, restarts, seed, initial=[est.controls])


# -- homogeneous norm ----------------------------------------------------


def homogeneous_norm(g: CarnotGroup, x) -> float:
    """``max_k |x^(k)|^(1/k)`` over the layers."""
    x = np.asarray(getattr(x, "coords", x), dtype=float)
    return max(float(np.linalg.norm(x[s])) ** (1.0 / (k + 1)) for k, s in enumerate(g.layer_slices()))


def homogeneous_norm_power(g: CarnotGroup, x) -> Fraction:
    """Exact ``N(x)^(2L)`` with ``L = lcm(1..step)``: ``max_k (|x^(k)|^2)^(L/k)``."""
    x = getattr(x, "coords", x)
    L = math.lcm(*range(1, g.step + 1))
    vals = []
    for k, s in enumerate(g.layer_slices(), start=1):
        sq = sum((Fraction(v) ** 2 for v in x[s]), Fraction(0))
        vals.append(sq ** (L // k))
    return max(vals)


@dataclass
class Equivalence:
    c_low: float
    c_high: float
    ratios: list[float]
    points: list[list[float]]

    def to_json(self) -> dict:
        return {"c_low": self.c_low, "c_high": self.c_high, "samples": len(self.ratios)}


def unit_sphere_samples(g: CarnotGroup, samples: int, seed: int) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(samples):
        x = rng.standard_normal(g.n)
        out.append(g.dilate(1.0 / homogeneous_norm(g, x), x))
    return out


def norm_distance_equivalence(
    g: CarnotGroup, samples: int = 100, seed: int = 0, N: int = 24, restarts: int = 6, points=None
) -> Equivalence:
    """Empirical constants with ``c_low N(x) <= d_est(0, x) <= c_high N(x)``."""
    if samples < 10 and points is None:
        raise ValueError("need at least 10 samples")
    pts = list(points) if points is not None else unit_sphere_samples(g, samples, seed)
    ratios = []
    for i, x in enumerate(pts):
        est = optimize_controls(g, x, N, restarts, seed=seed * 100003 + i)
        ratios.append(est.value / homogeneous_norm(g, x))
    return Equivalence(min(ratios), max(ratios), ratios, [list(map(float, p)) for p in pts])


# -- ball membership -----------------------------------------------------


@dataclass
class BallReach:
    inside: bool
    estimate: DistanceEstimate
    radius: float

    @property
    def verdict(self) -> str:
        return "inside-certified" if self.inside else "unresolved"


def ball_reach(
    g: CarnotGroup,
    center,
    r: float,
    target,
    N: int = 24,
    restarts: int = 4,
    seed: int = 0,
    initial: list[np.ndarray] | None = None,
) -> BallReach:
    """Certify ``target`` in the open ball ``B(center, r)`` by a feasible path shorter than ``r``.

    Never certifies that a point lies outside.
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    est = distance_estimate(g, center, target, N, restarts, seed, initial)
    return BallReach(bool(est.ok and est.value < r), est, r)
