"""Implicit sets, horizontal convexity scans and inner-cone probes.

A set is ``{F >= 0}`` (closed form) or ``{F > 0}`` (open form) for a
piecewise polynomial ``F`` built from ``+ - *``, integer powers and the
indicator ``step(u) = 1_{u >= 0}``.  Membership is the exact sign of ``F`` on
rational points; distances are only ever used as upper bounds (to certify that
a point lies inside a ball), never to certify that a point lies outside.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import sympy
from sympy.parsing.sympy_parser import convert_xor, parse_expr, standard_transformations

from .distance import ball_reach, distance_estimate, homogeneous_norm, unit_sphere_samples
from .groups import CarnotGroup, FiliformGroup, Free32Group, GroupError, parse_group
from .numbers import EXACT, FLOAT, exact_array, format_scalar

KINK_BAND = 1e-9
BOUNDARY_TOL = 1e-12
INTERIOR, EXTERIOR, BOUNDARY = "interior", "exterior", "boundary"


class step(sympy.Function):
    """Indicator of ``[0, +inf)``; its derivative is taken as zero away from the kink."""

    @classmethod
    def eval(cls, arg):
        if arg.is_Number:
            return sympy.Integer(1) if arg >= 0 else sympy.Integer(0)
        return None

    def fdiff(self, argindex=1):
        return sympy.Integer(0)


def _evaluate(expr, env: dict, exact: bool):
    """Vectorized walk of a restricted expression tree."""
    if expr.is_Symbol:
        return env[expr]
    if expr.is_Integer:
        return int(expr)
    if expr.is_Rational:
        return Fraction(int(expr.p), int(expr.q)) if exact else float(expr)
    if expr.is_Add:
        out = 0
        for a in expr.args:
            out = out + _evaluate(a, env, exact)
        return out
    if expr.is_Mul:
        out = 1
        for a in expr.args:
            out = out * _evaluate(a, env, exact)
        return out
    if expr.is_Pow:
        e = expr.exp
        if not (e.is_Integer and e >= 0):
            raise ValueError(f"only non-negative integer powers are supported: {expr}")
        return _evaluate(expr.base, env, exact) ** int(e)
    if isinstance(expr, step):
        v = np.asarray(_evaluate(expr.args[0], env, exact))
        return np.where(np.asarray(v >= 0, dtype=bool), 1, 0)
    raise ValueError(f"unsupported expression node: {expr}")


def _kink_args(expr) -> list:
    return [s.args[0] for s in expr.atoms(step)]


def coordinate_symbols(g: CarnotGroup) -> tuple[list[sympy.Symbol], dict[str, sympy.Symbol]]:
    syms = [sympy.Symbol(f"x{i + 1}", real=True) for i in range(g.n)]
    names = {s.name: s for s in syms}
    if isinstance(g, FiliformGroup):
        names["x"], names["y"] = syms[0], syms[1]
        for k in range(1, g.p + 1):
            names[f"t{k}"] = syms[1 + k]
    return syms, names


def _check_tree(expr) -> None:
    for node in sympy.preorder_traversal(expr):
        if node.is_Symbol or node.is_Rational or node.is_Add or node.is_Mul or isinstance(node, step):
            continue
        if node.is_Pow and node.exp.is_Integer and node.exp >= 0:
            continue
        raise ValueError(f"malformed expression near {node}")


@dataclass
class ImplicitSet:
    name: str
    group: CarnotGroup
    F: sympy.Expr
    strict: bool = False  # {F > 0} when True, {F >= 0} otherwise
    symbols: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.symbols:
            self.symbols = coordinate_symbols(self.group)[0]
        _check_tree(self.F)

    def evaluate(self, x, expr=None, mode: str | None = None):
        """``F`` (or ``expr``) at a point or a batch of points (last axis = coordinates)."""
        arr = np.asarray(getattr(x, "coords", x))
        exact = (arr.dtype == object) if mode is None else mode == EXACT
        if exact and arr.dtype != object:
            arr = np.vectorize(Fraction, otypes=[object])(arr)
        if not exact:
            arr = arr.astype(float)
        env = {s: arr[..., i] for i, s in enumerate(self.symbols)}
        out = _evaluate(self.F if expr is None else expr, env, exact)
        return np.broadcast_to(np.asarray(out, dtype=object if exact else float), arr.shape[:-1])

    def contains(self, x, mode: str | None = None) -> np.ndarray:
        v = self.evaluate(x, mode=mode)
        return np.asarray(v > 0 if self.strict else v >= 0, dtype=bool)

    def near_kink(self, x) -> np.ndarray:
        arr = np.asarray(getattr(x, "coords", x), dtype=float)
        out = np.zeros(arr.shape[:-1], dtype=bool)
        for k in _kink_args(self.F):
            out |= np.abs(self.evaluate(arr, expr=k, mode=FLOAT)) < KINK_BAND
        return out

    def complement(self) -> "ImplicitSet":
        return ImplicitSet(self.name + "^c", self.group, -self.F, not self.strict, self.symbols, dict(self.meta))

    def to_json(self) -> dict:
        rel = ">" if self.strict else ">="
        return {"name": self.name, "F": f"{sympy.sstr(self.F)} {rel} 0", "group": self.group.to_json()}


# -- named sets ------------------------------------------------------------


def filiform_tp_set(p: int, name: str | None = None) -> ImplicitSet:
    """``{t_p + y^(p+2) step(y) >= 0}`` in the filiform group of index ``p``."""
    g = FiliformGroup(p)
    s, _ = coordinate_symbols(g)
    y, tp = s[1], s[-1]
    F = tp + y ** (p + 2) * step(y)
    return ImplicitSet(name or f"filiform-tp({p})", g, F, False, s, {"p": p})


def filiform_even(p: int) -> ImplicitSet:
    if p < 2 or p % 2:
        raise GroupError("filiform-even needs an even p >= 2")
    return filiform_tp_set(p, f"filiform-even({p})")


def filiform_odd(p: int) -> ImplicitSet:
    """The same formula at odd ``p``; it is not horizontally convex."""
    if p < 3 or p % 2 == 0:
        raise GroupError("filiform-odd needs an odd p >= 3")
    return filiform_tp_set(p, f"filiform-odd({p})")


def filiform_odd_modified(p: int) -> ImplicitSet:
    """``{t_(p-1) + y^(p+1) step(y) >= 0}``, the convex replacement for odd ``p``."""
    if p < 3 or p % 2 == 0:
        raise GroupError("needs an odd p >= 3")
    g = FiliformGroup(p)
    s, _ = coordinate_symbols(g)
    y = s[1]
    F = s[-2] + y ** (p + 1) * step(y)
    return ImplicitSet(f"filiform-odd-modified({p})", g, F, False, s, {"p": p})


def engel_remark42() -> ImplicitSet:
    """``{x4 > -x2^4 step(x2)}`` in the Engel group."""
    g = FiliformGroup(2)
    s, _ = coordinate_symbols(g)
    F = s[3] + s[1] ** 4 * step(s[1])
    return ImplicitSet("engel-remark42", g, F, True, s, {})


def free32_psi(xi, psi=None, name: str = "free32-psi") -> ImplicitSet:
    """``{xi2 x4 - xi1 x5 - <xi,x>^3/6 - psi(<xi,x>) > 0}`` in the free group of step 3, rank 2."""
    g = Free32Group()
    s, _ = coordinate_symbols(g)
    xi1, xi2 = (sympy.nsimplify(v, rational=True) for v in xi)
    tau = sympy.Symbol("tau", real=True)
    psi_expr = psi(tau) if psi else -(tau**4) * step(tau)
    dot = xi1 * s[0] + xi2 * s[1]
    F = sympy.expand(xi2 * s[3] - xi1 * s[4] - dot**3 / 6 - psi_expr.subs(tau, dot))
    meta = {"xi": (Fraction(str(xi1)), Fraction(str(xi2))), "psi": psi_expr, "tau": tau}
    return ImplicitSet(f"{name}({format_scalar(meta['xi'][0])},{format_scalar(meta['xi'][1])})", g, F, True, s, meta)


def free32_psi4(xi) -> ImplicitSet:
    """The example with ``psi(t) = -t^4 step(t)``."""
    return free32_psi(xi, name="free32-psi4")


def halfspace(g: CarnotGroup, j: int = 1) -> ImplicitSet:
    """``{x_j >= 0}`` in the first layer."""
    s, _ = coordinate_symbols(g)
    return ImplicitSet(f"halfspace(x{j})", g, s[j - 1], False, s, {})


def full_space(g: CarnotGroup) -> ImplicitSet:
    s, _ = coordinate_symbols(g)
    return ImplicitSet("full", g, sympy.Integer(1), False, s, {})


def expression_set(g: CarnotGroup, text: str, name: str | None = None) -> ImplicitSet:
    """Parse ``"<expr> >= 0"``, ``"<expr> > 0"`` or a bare ``<expr>`` (meaning ``>= 0``)."""
    strict = False
    body = text.strip()
    m = re.fullmatch(r"(.*?)(>=|>)\s*0", body)
    if m:
        body, strict = m.group(1), m.group(2) == ">"
    _, names = coordinate_symbols(g)
    local = dict(names)
    local["step"] = step
    try:
        F = parse_expr(body, local_dict=local, transformations=standard_transformations + (convert_xor,))
    except Exception as exc:  # sympy raises many types here
        raise ValueError(f"malformed expression: {text!r}") from exc
    if not isinstance(F, sympy.Expr) or F.free_symbols - set(names.values()):
        raise ValueError(f"malformed expression: {text!r}")
    F = sympy.expand(F)
    return ImplicitSet(name or text, g, F, strict, coordinate_symbols(g)[0], {})


def _parse_xi(text: str) -> tuple[Fraction, Fraction]:
    parts = [Fraction(v) for v in text.split(",")]
    if len(parts) != 2:
        raise ValueError("xi needs two components")
    return parts[0], parts[1]


def parse_set(spec: str, group: CarnotGroup | str | None = None) -> ImplicitSet:
    """Named tags (``filiform-even:p``, ``filiform-odd:p``, ``engel-remark42``,
    ``free32-psi4:a,b``, ``full``, ``halfspace``) or an expression over the group coordinates."""
    if isinstance(group, str):
        group = parse_group(group)
    tag, _, arg = spec.partition(":")
    tag = tag.strip().lower()
    if tag == "filiform-even":
        return filiform_even(int(arg))
    if tag == "filiform-odd":
        return filiform_odd(int(arg))
    if tag == "filiform-odd-modified":
        return filiform_odd_modified(int(arg))
    if tag == "engel-remark42":
        return engel_remark42()
    if tag == "free32-psi4":
        return free32_psi4(_parse_xi(arg or "1,0"))
    if group is None:
        raise ValueError("expression sets need a group")
    if tag == "full":
        return full_space(group)
    if tag == "halfspace":
        return halfspace(group, int(arg or 1))
    return expression_set(group, spec)


# -- membership ---------------------------------------------------------


def membership(S: ImplicitSet, x, tol: float = BOUNDARY_TOL) -> str:
    """Sign of ``F``: exact on rational input, ``tol`` band in float mode."""
    arr = np.asarray(getattr(x, "coords", x))
    if arr.shape != (S.group.n,):
        raise GroupError(f"expected a point with {S.group.n} coordinates")
    v = S.evaluate(arr)[()]
    if arr.dtype == object:
        return INTERIOR if v > 0 else EXTERIOR if v < 0 else BOUNDARY
    return INTERIOR if v > tol else EXTERIOR if v < -tol else BOUNDARY


# -- derivative identities -------------------------------------------------


@dataclass
class DerivativeReport:
    name: str
    samples: int
    checks: dict[str, int]  # check name -> failures
    skipped_kink: int = 0

    @property
    def ok(self) -> bool:
        return all(v == 0 for v in self.checks.values())

    def to_json(self) -> dict:
        return {"set": self.name, "samples": self.samples, "failures": self.checks, "ok": self.ok, "skipped": self.skipped_kink}


def _random_rationals(rng, shape, den: int = 64, span: int = 2) -> np.ndarray:
    num = rng.integers(-span * den, span * den + 1, size=shape)
    return np.vectorize(lambda a: Fraction(int(a), den), otypes=[object])(num)


def field_derivative(S: ImplicitSet, coeffs, x) -> np.ndarray:
    """``(sum_j c_j X_j) F`` at the points ``x`` (exact for rational input)."""
    g = S.group
    grads = [sympy.diff(S.F, s) for s in S.symbols]
    gvals = np.stack([S.evaluate(x, expr=d) for d in grads], axis=-1)
    total = 0
    for j, c in enumerate(coeffs):
        if c == 0:
            continue
        total = total + c * (gvals * g.field(j, x)).sum(axis=-1)
    return total


def derivative_sign_check(S: ImplicitSet, samples: int = 1000, seed: int = 0) -> DerivativeReport:
    """Exact checks of the field identities behind horizontal convexity of the named sets."""
    g = S.group
    rng = np.random.default_rng(seed)
    x = _random_rationals(rng, (samples, g.n))
    kink = S.near_kink(x)
    # exact mode: a zero indicator argument is handled exactly, but skip it for the derivative
    x = x[~kink]
    checks: dict[str, int] = {}
    if S.name.startswith(("filiform-even", "filiform-odd-modified", "engel-remark42")):
        p = g.p
        XF = field_derivative(S, [1, 0], x)
        YF = field_derivative(S, [0, 1], x)
        checks["XF == 0"] = int(sum(v != 0 for v in XF))
        xs, ys = x[:, 0], x[:, 1]
        if S.name.startswith("filiform-odd-modified"):
            expected = [a ** (p - 1) / _fact(p - 1) + (p + 1) * b**p * (b >= 0) for a, b in zip(xs, ys)]
        elif S.name.startswith("engel"):
            expected = [a**2 / 2 + 4 * b**3 * (b >= 0) for a, b in zip(xs, ys)]
        else:
            expected = [a**p / _fact(p) + (p + 2) * b ** (p + 1) * (b >= 0) for a, b in zip(xs, ys)]
        checks["YF formula"] = int(sum(v != e for v, e in zip(YF, expected)))
        checks["YF >= 0"] = int(sum(v < 0 for v in YF))
    elif isinstance(g, Free32Group) and "xi" in S.meta:
        xi1, xi2 = S.meta["xi"]
        if xi1 * xi1 + xi2 * xi2 != 1:
            raise GroupError("xi must be a unit vector")
        tau = S.meta["tau"]
        dpsi = sympy.diff(S.meta["psi"], tau)
        rot = field_derivative(S, [-xi2, xi1], x)
        along = field_derivative(S, [xi1, xi2], x)
        dot = xi1 * x[:, 0] + xi2 * x[:, 1]
        dpsi_vals = np.array(
            [_evaluate(dpsi, {tau: d}, True) for d in dot], dtype=object
        )
        expected = (x[:, 0] ** 2 + x[:, 1] ** 2 - dot**2) / 2 - dpsi_vals
        checks["rotated field == 0"] = int(sum(v != 0 for v in rot))
        checks["along-field formula"] = int(sum(v != e for v, e in zip(along, expected)))
        checks["along-field >= 0"] = int(sum(v < 0 for v in along))
    else:
        raise ValueError(f"no derivative identities known for {S.name}")
    return DerivativeReport(S.name, len(x), checks, int(kink.sum()))


def _fact(k: int) -> int:
    out = 1
    for i in range(2, k + 1):
        out *= i
    return out


# -- horizontal convexity scan ------------------------------------------


@dataclass
class LineWitness:
    base: list
    V: list
    s: tuple  # s1 < s2 < s3
    pattern: str  # "in/out/in"

    def to_json(self) -> dict:
        return {
            "base": [format_scalar(v) for v in self.base],
            "V": [format_scalar(v) for v in self.V],
            "s": [format_scalar(v) for v in self.s],
            "pattern": self.pattern,
        }


def line_points(g: CarnotGroup, base, V, s_values) -> np.ndarray:
    """``base . exp(s V)`` for each ``s`` (exact on rational input)."""
    base = np.asarray(base, dtype=object)
    V = np.asarray(V, dtype=object)
    s = np.asarray(s_values, dtype=object)[:, None]
    return g.multiply(base[None, :], g.exp(s * V[None, :]))


def line_violation(inside: np.ndarray) -> tuple[int, int, int] | None:
    """Indices ``i < j < k`` with in/out/in, or ``None`` if ``inside`` is an interval."""
    idx = np.flatnonzero(inside)
    if len(idx) < 2:
        return None
    gaps = np.flatnonzero(~inside[idx[0] : idx[-1] + 1])
    if len(gaps) == 0:
        return None
    j = idx[0] + gaps[0]
    return int(idx[0]), int(j), int(idx[-1])


def check_line(S: ImplicitSet, base, V, s_values) -> LineWitness | None:
    pts = line_points(S.group, base, V, s_values)
    hit = line_violation(S.contains(pts))
    if hit is None:
        return None
    return LineWitness(list(base), list(V), tuple(s_values[i] for i in hit), "in/out/in")


@dataclass
class ScanReport:
    name: str
    lines: int
    grid: int
    witnesses: list[LineWitness]

    @property
    def verdict(self) -> str:
        return "witness" if self.witnesses else "no-violation"

    def to_json(self) -> dict:
        return {
            "set": self.name,
            "lines": self.lines,
            "grid": self.grid,
            "verdict": self.verdict,
            "witnesses": [w.to_json() for w in self.witnesses[:10]],
            "witness_count": len(self.witnesses),
        }


def hconvex_scan(
    S: ImplicitSet, lines: int = 1000, grid: int = 32, seed: int = 0, span: Fraction = Fraction(2), batch: int = 500
) -> ScanReport:
    """Sample horizontal lines ``x . exp(s V)`` and flag non-interval membership patterns.

    Bases and directions are random rationals; half of the bases are moved onto
    ``{F = 0}``-adjacent heights by resampling the last coordinate near zero.
    """
    if grid < 16:
        raise ValueError("need at least 16 grid points per line")
    g = S.group
    rng = np.random.default_rng(seed)
    s_values = [-span + 2 * span * Fraction(k, grid - 1) for k in range(grid)]
    s_arr = np.array(s_values, dtype=object)
    witnesses: list[LineWitness] = []
    done = 0
    while done < lines:
        b = min(batch, lines - done)
        base = _random_rationals(rng, (b, g.n), den=32, span=1)
        base[: b // 2, -1] = _random_rationals(rng, (b // 2,), den=4096, span=1) / 16
        V = _random_rationals(rng, (b, g.m), den=16, span=1)
        pts = g.multiply(base[:, None, :], g.exp(s_arr[None, :, None] * V[:, None, :]))
        inside = S.contains(pts)
        for i in range(b):
            hit = line_violation(inside[i])
            if hit is not None:
                witnesses.append(LineWitness(list(base[i]), list(V[i]), tuple(s_values[k] for k in hit), "in/out/in"))
        done += b
    return ScanReport(S.name, lines, grid, witnesses)


def odd_witness(p: int = 3) -> dict:
    """In/out/in along ``exp(s(-X + Y))`` for the odd-``p`` set at ``s = 0, 1/(2(p+1)!), 1/(p+1)!``."""
    S = filiform_odd(p)
    f = Fraction(1, _fact(p + 1))
    s_values = [Fraction(0), f / 2, f]
    pts = line_points(S.group, [Fraction(0)] * S.group.n, [Fraction(-1), Fraction(1)], s_values)
    F = S.evaluate(pts)
    inside = S.contains(pts)
    # a finer exact pass: every interior grid point of ]0, 1/(p+1)![ lies outside
    fine = [f * Fraction(k, 64) for k in range(1, 64)]
    fine_in = S.contains(line_points(S.group, [Fraction(0)] * S.group.n, [Fraction(-1), Fraction(1)], fine))
    return {
        "set": S.name,
        "s": [format_scalar(v) for v in s_values],
        "F": [format_scalar(v) for v in F],
        "inside": [bool(v) for v in inside],
        "pattern_ok": bool(inside[0] and not inside[1] and inside[2]),
        "interior_all_outside": bool(not fine_in.any()),
    }


# -- inner cone probe ------------------------------------------------------


@dataclass
class Violation:
    s: Fraction
    point: np.ndarray
    F: Fraction
    distance: float
    radius: float
    residual: float

    def to_json(self) -> dict:
        return {
            "s": format_scalar(self.s),
            "point": [format_scalar(v) for v in self.point],
            "F": format_scalar(self.F),
            "distance_upper": self.distance,
            "radius": self.radius,
            "residual": self.residual,
        }


@dataclass
class ConeReport:
    name: str
    vertex: list
    V: list
    eps: Fraction
    s_grid: list
    per_s: list[dict]
    violations: list[Violation]

    @property
    def verdict(self) -> str:
        return "violated" if self.violations else "no-violation-found"

    def to_json(self) -> dict:
        return {
            "set": self.name,
            "vertex": [format_scalar(v) for v in self.vertex],
            "V": [format_scalar(v) for v in self.V],
            "eps": format_scalar(self.eps),
            "s_grid": [format_scalar(v) for v in self.s_grid],
            "per_s": self.per_s,
            "verdict": self.verdict,
            "violations": [v.to_json() for v in self.violations],
        }


def _to_fraction_array(a) -> np.ndarray:
    return exact_array(np.ravel(np.asarray(a, dtype=object)))


def cone_candidates(g: CarnotGroup, samples: int, rng) -> list[np.ndarray]:
    """Offsets ``u`` (before the ``delta_{eps s}`` scaling) likely to have ``d(0, u) < 1``.

    Random points of the unit homogeneous sphere dilated by random factors, plus
    the top-layer axis directions, which probe the box of the ball-box estimate.
    """
    out = []
    for k in range(g.n - 1, g.n):
        for sign in (-1, 1):
            e = np.zeros(g.n)
            e[k] = sign
            for rho in (0.5, 0.25, 0.125, 0.0625):
                out.append(g.dilate(rho, e))
    for v in unit_sphere_samples(g, samples, int(rng.integers(2**31))):
        out.append(g.dilate(rng.uniform(0.02, 0.5), v))
    return out


def cone_probe(
    S: ImplicitSet,
    vertex,
    V,
    eps,
    s_grid,
    samples: int = 32,
    seed: int = 0,
    max_certify: int = 2,
    N: int = 24,
    restarts: int = 4,
) -> ConeReport:
    """Look for points of ``B(vertex . exp(sV), eps s)`` outside the set.

    A violation needs both a feasible path shorter than ``eps s`` (via
    :func:`ball_reach`) and an exact negative sign test.
    """
    eps = Fraction(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    g = S.group
    vertex = _to_fraction_array(vertex)
    Vf = _to_fraction_array(V)
    rng = np.random.default_rng(seed)
    offsets = [_to_fraction_array(u) for u in cone_candidates(g, samples, rng)]
    per_s, violations = [], []
    for si, s in enumerate(s_grid):
        s = Fraction(s)
        axis = g.multiply(vertex, g.exp(Vf * s))
        pts = np.stack([g.multiply(axis, g.dilate(eps * s, u)) for u in offsets])
        F = S.evaluate(pts)
        outside = [i for i in range(len(pts)) if not (F[i] > 0 if S.strict else F[i] >= 0)]
        outside.sort(key=lambda i: homogeneous_norm(g, offsets[i]))
        certified = 0
        for i in outside[:max_certify * 3]:
            reach = ball_reach(g, axis.astype(float), float(eps * s), pts[i].astype(float), N, restarts, seed=si)
            if reach.inside:
                violations.append(
                    Violation(s, pts[i], F[i], reach.estimate.value, float(eps * s), reach.estimate.residual)
                )
                certified += 1
                if certified >= max_certify:
                    break
        per_s.append({"s": format_scalar(s), "sampled": len(pts), "outside": len(outside), "certified": certified})
    return ConeReport(S.name, list(vertex), list(Vf), eps, list(s_grid), per_s, violations)


# -- the filiform witness ----------------------------------------------------


@dataclass
class FiliformWitness:
    p: int
    eps: Fraction
    s: Fraction
    s_requested: Fraction
    c: float
    c_exact: Fraction
    point: np.ndarray
    F: Fraction
    distance: float
    residual: float
    bisection: list[tuple[float, bool]]

    @property
    def certified(self) -> bool:
        return self.F < 0 and self.distance < float(self.eps * self.s)

    def to_json(self) -> dict:
        return {
            "p": self.p,
            "eps": format_scalar(self.eps),
            "s": format_scalar(self.s),
            "s_requested": format_scalar(self.s_requested),
            "c": format_scalar(self.c_exact),
            "point": [format_scalar(v) for v in self.point],
            "F": format_scalar(self.F),
            "distance_upper": self.distance,
            "radius": float(self.eps * self.s),
            "residual": self.residual,
            "certified": self.certified,
        }


def _witness_point(p: int, s: Fraction, eps: Fraction, c: Fraction) -> np.ndarray:
    pt = [Fraction(0)] * (p + 2)
    pt[1] = s
    pt[-1] = -c * (s * eps) ** (p + 1)
    return np.array(pt, dtype=object)


def filiform_witness(p: int, eps, s, steps: int = 16, N: int = 24, restarts: int = 4, seed: int = 0) -> FiliformWitness:
    """Bisection on ``c`` in ``[1e-6, 1]`` for ``P_s = (0, s, 0, ..., -c (s eps)^(p+1))``.

    The reach certificate ``d((0,s,0,...), P_s) < eps s`` is found first.  If
    ``F(P_s) >= 0`` at the requested ``s`` (i.e. ``s >= c eps^(p+1)``), ``s`` is
    replaced by ``c eps^(p+1) / 2`` and the reach certificate is recomputed there.
    """
    eps, s = Fraction(eps), Fraction(s)
    if p < 2 or p % 2 or not (0 < eps <= 1) or s <= 0:
        raise ValueError("need even p >= 2, 0 < eps <= 1, s > 0")
    S = filiform_even(p)
    g = S.group

    def reach(c: Fraction, s_val: Fraction):
        center = np.zeros(g.n)
        center[1] = float(s_val)
        est = distance_estimate(g, center, _witness_point(p, s_val, eps, c).astype(float), N, restarts, seed)
        return est, bool(est.ok and est.value < float(eps * s_val))

    lo, hi = Fraction(1, 10**6), Fraction(1)
    best = None
    trail = []
    est, ok = reach(hi, s)
    trail.append((float(hi), ok))
    if ok:
        best = (hi, est)
    else:
        for _ in range(steps):
            mid = (lo + hi) / 2
            est, ok = reach(mid, s)
            trail.append((float(mid), ok))
            if ok:
                best, lo = (mid, est), mid
            else:
                hi = mid
    if best is None:
        raise GroupError("bisection certified no c; the distance oracle is too weak here")
    c, est = best
    s_used = s
    if S.evaluate(_witness_point(p, s, eps, c)) >= 0:
        s_used = c * eps ** (p + 1) / 2
        est, ok = reach(c, s_used)
        if not ok:
            raise GroupError("reach certificate lost after rescaling s")
    pt = _witness_point(p, s_used, eps, c)
    return FiliformWitness(p, eps, s_used, s, float(c), c, pt, S.evaluate(pt)[()], est.value, est.residual, trail)


def witness_dilation_check(w: FiliformWitness, lam=Fraction(1, 2), N: int = 24, restarts: int = 4) -> dict:
    """``delta_lam`` maps the witness at ``(eps, s)`` to one at ``(eps, lam s)``."""
    g = FiliformGroup(w.p)
    lam = Fraction(lam)
    moved = g.dilate(lam, w.point)
    expected = _witness_point(w.p, lam * w.s, w.eps, w.c_exact)
    center = np.zeros(g.n)
    center[1] = float(lam * w.s)
    est = distance_estimate(g, center, moved.astype(float), N, restarts)
    F = filiform_even(w.p).evaluate(moved)[()]
    return {
        "coords_match": bool(all(a == b for a, b in zip(moved, expected))),
        "F": format_scalar(F),
        "F_negative": bool(F < 0),
        "distance_upper": est.value,
        "radius": float(w.eps * lam * w.s),
        "inside": bool(est.ok and est.value < float(w.eps * lam * w.s)),
        "ratio": est.value / w.distance,
    }


# -- the free-group axis check ---------------------------------------------


def free32_axis_check(xi, eps, c, s_grid) -> list[dict]:
    """Sign table of ``F(gamma(s))`` against ``-c eps^3 s^3 + s^4``.

    ``gamma(s) = exp(s xi . X) . (0, 0, 0, -c xi2 eps^3 s^3, c xi1 eps^3 s^3)``.
    """
    xi1, xi2 = (Fraction(v) for v in xi)
    if xi1 * xi1 + xi2 * xi2 != 1:
        if abs(float(xi1) ** 2 + float(xi2) ** 2 - 1) > 1e-12:
            raise ValueError("xi must be a unit vector")
    eps, c = Fraction(eps), Fraction(c)
    S = free32_psi4((xi1, xi2))
    g = S.group
    k = c * eps**3
    rows = []
    for s in s_grid:
        s = Fraction(s)
        gam = np.array([s * xi1, s * xi2, 0, xi2 * s**3 * (Fraction(1, 6) - k), -xi1 * s**3 * (Fraction(1, 6) - k)], dtype=object)
        via_law = g.multiply(g.exp(np.array([s * xi1, s * xi2], dtype=object)), np.array([0, 0, 0, -xi2 * k * s**3, xi1 * k * s**3], dtype=object))
        F = S.evaluate(gam)[()]
        predicted = -k * s**3 + s**4
        rows.append(
            {
                "s": format_scalar(s),
                "F": format_scalar(F),
                "predicted": format_scalar(predicted),
                "in_E": bool(F > 0),
                "agrees": bool(F == predicted) and bool(all(a == b for a, b in zip(gam, via_law))),
            }
        )
    return rows


__all__ = [
    "ConeReport",
    "ImplicitSet",
    "check_line",
    "cone_probe",
    "derivative_sign_check",
    "engel_remark42",
    "expression_set",
    "filiform_even",
    "filiform_odd",
    "filiform_odd_modified",
    "filiform_witness",
    "free32_axis_check",
    "free32_psi4",
    "hconvex_scan",
    "membership",
    "odd_witness",
    "parse_set",
    "witness_dilation_check",
]
