"""First-order expansion of the distance from the origin at ``exp(w.X)``.

With ``xi = w/p`` and a slice ``V`` on which ``dGamma(xi,...,xi)`` is invertible,
the system ``Gamma(xi + a_1, ..., xi + a_p) = exp(w.X) . x`` is solved by damped
Newton.  The chain length ``sum |xi + a_j|`` bounds ``d(exp(w.X) . x)`` from
above; the residual against ``|w| + <w/|w|, x^1>`` should decay like ``d(x)^2``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .distance import _threads, distance_estimate, homogeneous_norm
from .groups import CarnotGroup, GroupError, StepTwoGroup
from .multiexp import gamma_and_jacobian, gamma_fast, submersion_test
from .steptwo import choose_p, solve_correction

NEWTON_TOL = 1e-12
NEWTON_HALVINGS = 30
NEWTON_MAXITER = 50
MAX_SHRINK = 30
DEFAULT_LAMBDAS = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4)


def _vec(w) -> np.ndarray:
    w = np.asarray(w, dtype=float).ravel()
    if not np.any(w):
        raise GroupError("w must be nonzero")
    return w


def smallest_submersive_p(g: CarnotGroup, xi, max_p: int = 12) -> int:
    for p in range(1, max_p + 1):
        if submersion_test(g, xi, p).is_submersion:
            return p
    raise GroupError("not a submersion here")


@dataclass
class Slice:
    columns: list[int]  # indices into the flattened (p, m) chain
    p: int
    m: int
    condition: float

    def embed(self, s: np.ndarray) -> np.ndarray:
        alpha = np.zeros(self.p * self.m)
        alpha[self.columns] = s
        return alpha.reshape(self.p, self.m)

    def labels(self) -> list[str]:
        return [f"d{j // self.m + 1}.{j % self.m + 1}" for j in self.columns]

    def to_json(self) -> dict:
        return {"columns": self.labels(), "condition": self.condition}


def select_slice(g: CarnotGroup, xi, p: int) -> Slice:
    """Coordinate slice from column-pivoted QR of ``dGamma(xi, ..., xi)``."""
    xi = np.asarray(xi, dtype=float).ravel()
    rep = submersion_test(g, xi, p)
    if not rep.is_submersion:
        raise GroupError("not a submersion here")
    J = np.asarray(rep.matrix, dtype=float)
    _, _, piv = scipy.linalg.qr(J, pivoting=True)
    cols = sorted(int(c) for c in piv[: g.n])
    cond = float(np.linalg.cond(J[:, cols]))
    return Slice(cols, p, g.m, cond)


@dataclass
class PerturbationSolution:
    xi: np.ndarray
    p: int
    slice: Slice
    alpha: np.ndarray  # (p, m)
    x: np.ndarray
    residual: float
    shrink_steps: int
    bound_ratio: float | None = None  # |alpha| / d_est(x)
    norm_ratio: float | None = None  # |alpha| / N(x)

    @property
    def first_layer_error(self) -> float:
        return float(np.abs(self.alpha.sum(axis=0) - self.x[: self.alpha.shape[1]]).max())

    @property
    def chain_length(self) -> float:
        return float(np.linalg.norm(self.xi + self.alpha, axis=1).sum())

    def to_json(self) -> dict:
        return {
            "p": self.p,
            "slice": self.slice.to_json(),
            "alpha": self.alpha.tolist(),
            "residual": self.residual,
            "first_layer_error": self.first_layer_error,
            "chain_length": self.chain_length,
            "bound_ratio": self.bound_ratio,
            "norm_ratio": self.norm_ratio,
        }


def _newton(g, xi, sl: Slice, target, s0):
    s = s0.copy()
    val, J = gamma_and_jacobian(g, xi + sl.embed(s))
    F = val - target
    res = np.linalg.norm(F)
    for _ in range(NEWTON_MAXITER):
        if res < NEWTON_TOL:
            return s, res, True
        try:
            step = np.linalg.solve(J[:, sl.columns], -F)
        except np.linalg.LinAlgError:
            return s, res, False
        t = 1.0
        for _ in range(NEWTON_HALVINGS):
            cand = s + t * step
            cres = np.linalg.norm(gamma_fast(g, xi + sl.embed(cand)) - target)
            if cres < res:
                break
            t *= 0.5
        else:
            return s, res, False
        s = cand
        val, J = gamma_and_jacobian(g, xi + sl.embed(s))
        F = val - target
        res = np.linalg.norm(F)
    return s, res, res < NEWTON_TOL


def solve_perturbation(
    g: CarnotGroup, xi, p: int, x, sl: Slice | None = None, with_distance: bool = False, seed: int = 0
) -> PerturbationSolution:
    """Solve ``Gamma(xi + alpha) = exp(p xi . X) . x`` on the slice.

    If Newton fails from ``alpha = 0``, ``x`` is shrunk by ``delta_{1/2}`` until it
    converges and the solution is continued back along the dilation path.
    """
    xi = np.asarray(xi, dtype=float).ravel()
    x = np.asarray(getattr(x, "coords", x), dtype=float).ravel()
    sl = sl or select_slice(g, xi, p)
    base = g.exp(p * xi)
    s = np.zeros(g.n)
    shrink = 0
    while True:
        target = g.multiply(base, g.dilate(0.5**shrink, x))
        s_try, res, ok = _newton(g, xi, sl, target, s)
        if ok:
            s = s_try
            break
        shrink += 1
        if shrink > MAX_SHRINK:
            raise GroupError(f"Newton diverged after shrinking (residual {res:.3e})")
    for k in range(shrink - 1, -1, -1):
        # continuation through intermediate dilation factors
        for lam in np.linspace(0.5 ** (k + 1), 0.5**k, 5)[1:]:
            target = g.multiply(base, g.dilate(lam, x))
            s, res, ok = _newton(g, xi, sl, target, s)
            if not ok:
                raise GroupError(f"continuation failed at scale {lam:.3e} (residual {res:.3e})")
    alpha = sl.embed(s)
    sol = PerturbationSolution(xi, p, sl, alpha, x, float(res), shrink)
    a_norm = float(np.linalg.norm(alpha))
    hn = homogeneous_norm(g, x)
    sol.norm_ratio = a_norm / hn if hn > 0 else 0.0
    if with_distance and hn > 0:
        est = distance_estimate(g, np.zeros(g.n), x, N=24, restarts=4, seed=seed)
        sol.bound_ratio = a_norm / est.value
    return sol


def _excess(xi: np.ndarray, alpha: np.ndarray) -> float:
    """``sum_j (|xi + a_j| - |xi| - <xi/|xi|, a_j>)`` without cancellation."""
    nx = np.linalg.norm(xi)
    e = xi / nx
    full = np.linalg.norm(xi + alpha, axis=1)
    # |xi+a| - |xi| = (2<xi,a> + |a|^2) / (|xi+a| + |xi|)
    diff = (2 * alpha @ xi + (alpha**2).sum(axis=1)) / (full + nx)
    return float((diff - alpha @ e).sum())


@dataclass
class PansuResidual:
    r_upper: float  # chain bound
    r_est: float | None  # optimizer estimate
    chain_length: float
    solution: PerturbationSolution | None

    @property
    def r(self) -> float:
        return self.r_upper if self.r_est is None else min(self.r_upper, self.r_est)


def pansu_residual(
    g: CarnotGroup, w, x, p: int | None = None, with_distance: bool = False, N: int = 32, seed: int = 0
) -> PansuResidual:
    """``d_upper(exp(w.X) . x) - |w| - <w/|w|, x^1>``."""
    w = _vec(w)
    x = np.asarray(getattr(x, "coords", x), dtype=float).ravel()
    nw = np.linalg.norm(w)
    lin = float(w @ x[: g.m] / nw)
    if not np.any(x):
        return PansuResidual(0.0, 0.0 if with_distance else None, nw, None)
    p = p or smallest_submersive_p(g, w)
    xi = w / p
    sol = solve_perturbation(g, xi, p, x)
    # the first-layer identity makes sum a_j = x^1; keep any solver drift explicit
    drift = float((sol.alpha.sum(axis=0) - x[: g.m]) @ (xi / np.linalg.norm(xi)))
    r_upper = _excess(xi, sol.alpha) + drift
    r_est = None
    if with_distance:
        target = g.multiply(g.exp(w), x)
        chain = np.repeat(xi + sol.alpha, max(1, N // p), axis=0)
        est = distance_estimate(g, np.zeros(g.n), target, N=max(N, p), restarts=4, seed=seed, initial=[chain * p])
        r_est = est.value - nw - lin
    return PansuResidual(r_upper, r_est, sol.chain_length, sol)


def fit_slope(lambdas, residuals) -> float:
    lam = np.asarray(lambdas, dtype=float)
    r = np.asarray(residuals, dtype=float)
    return float(np.polyfit(np.log(lam), np.log(r), 1)[0])


@dataclass
class SlopeReport:
    lambdas: list[float]
    r_upper: list[float]
    r_est: list[float | None]
    chain_norms: list[float]
    slope: float | None
    slope_est: float | None
    degenerate: bool
    clamped: list[float] = field(default_factory=list)
    note: str = ""

    def rows(self) -> list[tuple]:
        return list(zip(self.lambdas, self.r_upper, self.r_est, self.chain_norms))

    def to_json(self) -> dict:
        return {
            "slope_upper": self.slope,
            "slope_est": self.slope_est,
            "degenerate": self.degenerate,
            "clamped_lambdas": self.clamped,
            "lambdas": self.lambdas,
            "r_upper": self.r_upper,
            "r_est": self.r_est,
            "note": self.note,
        }


def _fit_report(lambdas, ups, ests, norms, note) -> SlopeReport:
    floor = 1e-15
    clamped = [lam for lam, r in zip(lambdas, ups) if r <= floor]
    degenerate = len(clamped) == len(lambdas) or max(abs(r) for r in ups) <= floor
    slope = None
    if not degenerate:
        keep = [(lam, r) for lam, r in zip(lambdas, ups) if r > floor]
        slope = fit_slope(*zip(*keep)) if len(keep) >= 2 else None
    slope_est = None
    if ests and all(e is not None and e > floor for e in ests):
        slope_est = fit_slope(lambdas, ests)
    return SlopeReport(list(lambdas), ups, ests, norms, slope, slope_est, degenerate, clamped, note)


def pansu_slope(
    g: CarnotGroup, w, x0, lambdas=DEFAULT_LAMBDAS, p: int | None = None, with_distance: bool = False, seed: int = 0
) -> SlopeReport:
    """Least-squares slope of ``log r(delta_lam x0)`` against ``log lam``."""
    w = _vec(w)
    if len(lambdas) < 4:
        raise ValueError("need at least 4 grid points")
    p = p or smallest_submersive_p(g, w)
    x0 = np.asarray(getattr(x0, "coords", x0), dtype=float)

    def one(lam):
        return pansu_residual(g, w, g.dilate(lam, x0), p, with_distance, seed=seed)

    with ThreadPoolExecutor(_threads()) as pool:
        res = list(pool.map(one, lambdas))
    note = "r_est uses the optimizer estimate in place of d" if with_distance else ""
    return _fit_report(
        list(lambdas), [r.r_upper for r in res], [r.r_est for r in res], [r.chain_length for r in res], note
    )


# -- step-two groups -----------------------------------------------------


@dataclass
class StepTwoResidual:
    r: float
    chain_length: float
    scale: float  # |z|^2 + |t|

    @property
    def K(self) -> float:
        return self.r / self.scale if self.scale > 0 else 0.0


def steptwo_pansu_residual(g: StepTwoGroup, w, z, t) -> StepTwoResidual:
    """Residual of the constructive chain ``xi + u_j``; needs no submersion."""
    if not isinstance(g, StepTwoGroup):
        raise GroupError("needs a step-two group")
    w = _vec(w)
    z = np.asarray(z, dtype=float).ravel()
    t = np.asarray(t, dtype=float).ravel()
    scale = float(z @ z + np.linalg.norm(t))
    if scale == 0:
        return StepTwoResidual(0.0, float(np.linalg.norm(w)), 0.0)
    p = choose_p(g)
    xi = w / p
    sol = solve_correction(g, z, t, mode="float")
    u = sol.u.astype(float)
    length = float(np.linalg.norm(xi + u, axis=1).sum())
    return StepTwoResidual(_excess(xi, u), length, scale)


def steptwo_slope(g: StepTwoGroup, w, z0, t0, lambdas=DEFAULT_LAMBDAS) -> SlopeReport:
    """Fit under ``(z, t) -> (lam z, lam^2 t)``."""
    z0 = np.asarray(z0, dtype=float)
    t0 = np.asarray(t0, dtype=float)
    res = [steptwo_pansu_residual(g, w, lam * z0, lam**2 * t0) for lam in lambdas]
    rep = _fit_report(list(lambdas), [r.r for r in res], [None] * len(res), [r.chain_length for r in res], "")
    rep.note = f"K max = {max(r.K for r in res):.6g}"
    return rep


def uniform_differential_check(g: CarnotGroup, w, x0, factors=(0.5, 1.0, 2.0), lambdas=DEFAULT_LAMBDAS) -> dict:
    """Slopes at ``exp(c w . X)`` for several ``c`` using the same functional ``<w/|w|, x^1>``."""
    w = _vec(w)
    out = {}
    for c in factors:
        out[c] = pansu_slope(g, c * w, x0, lambdas).slope
    return out


def length_ratio_table(g: CarnotGroup, xi, p: int, x0, lambdas=DEFAULT_LAMBDAS) -> list[dict]:
    """``|alpha| / N(delta_lam x0)`` along the dilation path (bound sanity)."""
    sl = select_slice(g, xi, p)
    rows = []
    for lam in lambdas:
        sol = solve_perturbation(g, xi, p, g.dilate(lam, np.asarray(x0, dtype=float)), sl)
        rows.append({"lambda": lam, "alpha_norm": float(np.linalg.norm(sol.alpha)), "norm_ratio": sol.norm_ratio})
    return rows


__all__ = [
    "DEFAULT_LAMBDAS",
    "PerturbationSolution",
    "Slice",
    "SlopeReport",
    "fit_slope",
    "pansu_residual",
    "pansu_slope",
    "select_slice",
    "smallest_submersive_p",
    "solve_perturbation",
    "steptwo_pansu_residual",
    "steptwo_slope",
]
