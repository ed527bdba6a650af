"""Explicit arithmetic in step-two, filiform and free step-3 rank-2 Carnot groups.

Every group works on coordinate arrays of shape ``(..., n)``.  Object
arrays of :class:`~fractions.Fraction` give exact results; ``float64``
arrays give the fast path used by the optimizers.  The laws are polynomial,
so the same code serves both modes.

Besides the group law each family supplies the first-order partials
``dmul_left`` (derivative of ``a*b`` in ``a``), ``dmul_right`` (in ``b``) and
``dexp``; the multiexponential Jacobians are assembled from those.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from pathlib import Path

import numpy as np

from . import linalg
from .numbers import EXACT, FLOAT, as_fraction, format_scalar, mode_of, to_mode, zeros


class GroupError(ValueError):
    """Invalid descriptor or mismatched group data."""


def _const(value: Fraction, like: np.ndarray):
    return value if like.dtype == object else float(value)


def _eye(n: int, like: np.ndarray, batch=()) -> np.ndarray:
    if like.dtype == object:
        out = np.full(batch + (n, n), Fraction(0), dtype=object)
        for i in range(n):
            out[..., i, i] = Fraction(1)
        return out
    return np.broadcast_to(np.eye(n), batch + (n, n)).copy()


def _zeros_like_batch(shape, like: np.ndarray) -> np.ndarray:
    if like.dtype == object:
        return np.full(shape, Fraction(0), dtype=object)
    return np.zeros(shape)


class CarnotGroup:
    """Base class: a Carnot group on R^n with graded coordinates.

    Subclasses set ``family``, ``m``, ``n``, ``layers`` and implement the law.
    """

    family: str = ""
    m: int
    n: int
    layers: tuple[int, ...]

    @property
    def step(self) -> int:
        return len(self.layers)

    @property
    def weights(self) -> np.ndarray:
        return np.repeat(np.arange(1, self.step + 1), self.layers)

    def layer_slices(self) -> list[slice]:
        out, start = [], 0
        for size in self.layers:
            out.append(slice(start, start + size))
            start += size
        return out

    def identity(self, mode: str = EXACT) -> np.ndarray:
        return zeros(self.n, mode)

    # key used for equality and hashing of descriptors
    def _key(self) -> tuple:
        raise NotImplementedError

    def __eq__(self, other):
        return isinstance(other, CarnotGroup) and self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        return f"{type(self).__name__}{self._key()[1:]}"

    # -- law ------------------------------------------------------------
    def multiply(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def inverse(self, a: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def exp(self, w: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def flow(self, w: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Time-one flow of ``w.X`` from ``x`` by integrating the fields."""
        raise NotImplementedError

    def field(self, j: int, x: np.ndarray) -> np.ndarray:
        """Left-invariant horizontal field ``X_j`` (0-based) at ``x``."""
        raise NotImplementedError

    def dilate(self, lam, a: np.ndarray) -> np.ndarray:
        if a.dtype == object:
            lam = as_fraction(lam)
            scale = np.array([lam**int(k) for k in self.weights], dtype=object)
        else:
            scale = float(lam) ** self.weights
        return a * scale

    # -- first-order partials -------------------------------------------
    def dmul_left(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def dmul_right(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def dexp(self, w: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError


class StepTwoGroup(CarnotGroup):
    """R^m x R^l with ``(x,t)(xi,tau) = (x+xi, t+tau+Q(x,xi))``.

    ``Q`` has shape ``(l, m, m)`` with ``Q[a][j][k] = Q^a(e_j, e_k)``.
    """

    family = "step-two"

    def __init__(self, Q, name: str | None = None):
        arr = np.asarray(Q, dtype=object)
        if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
            raise GroupError("Q must have shape (l, m, m)")
        self.l, self.m = arr.shape[0], arr.shape[1]
        if self.l == 0:
            raise GroupError("not bracket-generating: vertical dimension is zero")
        self.Q = np.vectorize(as_fraction, otypes=[object])(arr)
        if np.any(self.Q + np.transpose(self.Q, (0, 2, 1)) != 0):
            raise GroupError("each Q^a must be skew-symmetric")
        if linalg.rank(self.bracket_matrix()) < self.l:
            raise GroupError("not bracket-generating: Q(e_j, e_k) do not span R^l")
        self.Qf = self.Q.astype(float)
        self.n = self.m + self.l
        self.layers = (self.m, self.l)
        self.name = name

    def _key(self):
        return (self.family, self.m, self.l, tuple(self.Q.ravel()))

    def __repr__(self):
        return f"StepTwoGroup(m={self.m}, l={self.l})" if self.name is None else self.name

    def bracket_matrix(self) -> np.ndarray:
        """Columns ``Q(e_j, e_k)`` for ``j < k`` in lexicographic order."""
        cols = [self.Q[:, j, k] for j, k in combinations(range(self.m), 2)]
        if not cols:
            return np.zeros((self.l, 0), dtype=object)
        return np.stack(cols, axis=1)

    def _q(self, like):
        return self.Q if like.dtype == object else self.Qf

    def bilinear(self, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
        """``Q(x, xi)`` with broadcasting over leading axes."""
        return np.einsum("...j,ajk,...k->...a", x, self._q(x), xi)

    def multiply(self, a, b):
        m = self.m
        x, t = a[..., :m], a[..., m:]
        xi, tau = b[..., :m], b[..., m:]
        return np.concatenate([x + xi, t + tau + self.bilinear(x, xi)], axis=-1)

    def inverse(self, a):
        return -a

    def exp(self, w):
        return np.concatenate([w, _zeros_like_batch(w.shape[:-1] + (self.l,), w)], axis=-1)

    def flow(self, w, x):
        # along the line x(s) = x + s w the t-velocity is Q(x(s), w) = Q(x, w)
        m = self.m
        return np.concatenate([x[..., :m] + w, x[..., m:] + self.bilinear(x[..., :m], w)], axis=-1)

    def field(self, j, x):
        out = _zeros_like_batch(x.shape, x)
        out[..., j] = _const(Fraction(1), x)
        out[..., self.m:] = np.einsum("...i,ai->...a", x[..., : self.m], self._q(x)[:, :, j])
        return out

    def dmul_left(self, a, b):
        batch = np.broadcast_shapes(a.shape[:-1], b.shape[:-1])
        out = _eye(self.n, a, batch)
        out[..., self.m:, : self.m] = np.einsum("ajk,...k->...aj", self._q(a), b[..., : self.m])
        return out

    def dmul_right(self, a, b):
        batch = np.broadcast_shapes(a.shape[:-1], b.shape[:-1])
        out = _eye(self.n, a, batch)
        out[..., self.m:, : self.m] = np.einsum("...j,ajk->...ak", a[..., : self.m], self._q(a))
        return out

    def dexp(self, w):
        out = _zeros_like_batch(w.shape[:-1] + (self.n, self.m), w)
        for i in range(self.m):
            out[..., i, i] = _const(Fraction(1), w)
        return out

    def vertical_map(self, x) -> np.ndarray:
        """Matrix of ``y -> Q(x, y)``, shape ``(l, m)``."""
        return np.einsum("j,ajk->ak", x, self._q(x))

    def to_json(self):
        return {
            "family": self.family,
            "m": self.m,
            "l": self.l,
            "Q": [[[format_scalar(v) for v in row] for row in qa] for qa in self.Q],
        }


class FiliformGroup(CarnotGroup):
    """Filiform group of the first type on R^{p+2}, coordinates (x, y, t_1..t_p).

    Fields ``X = d_x`` and ``Y = d_y + sum_k x^k/k! d_{t_k}``; coordinates are
    the entries of the lower-triangular matrix model.
    """

    family = "filiform"
    m = 2

    def __init__(self, p: int):
        if int(p) != p or p < 1:
            raise GroupError("filiform parameter p must be an integer >= 1")
        self.p = int(p)
        self.n = self.p + 2
        self.layers = (2,) + (1,) * self.p
        self._inv_fact = [Fraction(1, math.factorial(k)) for k in range(self.p + 3)]

    def _key(self):
        return (self.family, self.p)

    def __repr__(self):
        return f"FiliformGroup(p={self.p})"

    def _powers(self, x):
        """``[x^k / k! for k = 0..p]`` as a list of arrays."""
        out = [np.ones_like(x) if x.dtype != object else np.full(x.shape, Fraction(1), dtype=object)]
        for k in range(1, self.p + 1):
            out.append(out[-1] * x * _const(Fraction(1, k), x))
        return out

    def multiply(self, a, b):
        p = self.p
        x = a[..., 0]
        P = self._powers(x)
        # tau'_0 = eta, tau'_j = tau_j
        taus = [b[..., 1]] + [b[..., 1 + j] for j in range(1, p + 1)]
        cols = [a[..., 0] + b[..., 0], a[..., 1] + b[..., 1]]
        for k in range(1, p + 1):
            acc = a[..., 1 + k] + b[..., 1 + k]
            for j in range(0, k):
                acc = acc + P[k - j] * taus[j]
            cols.append(acc)
        return np.stack(cols, axis=-1)

    def inverse(self, a):
        p = self.p
        x = a[..., 0]
        P = self._powers(x)
        taus = [-a[..., 1]]
        for k in range(1, p + 1):
            acc = -a[..., 1 + k]
            for j in range(0, k):
                acc = acc - P[k - j] * taus[j]
            taus.append(acc)
        return np.stack([-a[..., 0]] + taus, axis=-1)

    def exp(self, w):
        xi, eta = w[..., 0], w[..., 1]
        cols = [xi, eta]
        power = eta
        for k in range(1, self.p + 1):
            power = power * xi
            cols.append(power * _const(self._inv_fact[k + 1], w))
        return np.stack(cols, axis=-1)

    def flow(self, w, x):
        # t_k += v * int_0^1 (x + s u)^k / k! ds = v * sum_i x^{k-i} u^i / ((k-i)! (i+1)!)
        u, v = w[..., 0], w[..., 1]
        x0 = x[..., 0]
        Px = self._powers(x0)
        Pu = [np.ones_like(u) if u.dtype != object else np.full(u.shape, Fraction(1), dtype=object)]
        for i in range(1, self.p + 1):
            Pu.append(Pu[-1] * u)
        cols = [x0 + u, x[..., 1] + v]
        for k in range(1, self.p + 1):
            integral = 0
            for i in range(0, k + 1):
                integral = integral + Px[k - i] * Pu[i] * _const(self._inv_fact[i + 1], x)
            cols.append(x[..., 1 + k] + v * integral)
        return np.stack(cols, axis=-1)

    def field(self, j, x):
        out = _zeros_like_batch(x.shape, x)
        one = _const(Fraction(1), x)
        if j == 0:
            out[..., 0] = one
            return out
        out[..., 1] = one
        P = self._powers(x[..., 0])
        for k in range(1, self.p + 1):
            out[..., 1 + k] = P[k]
        return out

    def dmul_left(self, a, b):
        p = self.p
        batch = np.broadcast_shapes(a.shape[:-1], b.shape[:-1])
        out = _eye(self.n, a, batch)
        P = self._powers(a[..., 0])
        taus = [b[..., 1]] + [b[..., 1 + j] for j in range(1, p + 1)]
        for k in range(1, p + 1):
            acc = 0
            for j in range(0, k):
                acc = acc + P[k - j - 1] * taus[j]
            out[..., 1 + k, 0] = acc
        return out

    def dmul_right(self, a, b):
        p = self.p
        batch = np.broadcast_shapes(a.shape[:-1], b.shape[:-1])
        out = _eye(self.n, a, batch)
        P = self._powers(a[..., 0])
        for k in range(1, p + 1):
            out[..., 1 + k, 1] = P[k]
            for j in range(1, k):
                out[..., 1 + k, 1 + j] = P[k - j]
        return out

    def dexp(self, w):
        xi, eta = w[..., 0], w[..., 1]
        out = _zeros_like_batch(w.shape[:-1] + (self.n, 2), w)
        one = _const(Fraction(1), w)
        out[..., 0, 0] = one
        out[..., 1, 1] = one
        power_prev = one  # xi^{k-1}
        for k in range(1, self.p + 1):
            c = _const(self._inv_fact[k + 1], w)
            out[..., 1 + k, 0] = eta * power_prev * k * c
            out[..., 1 + k, 1] = power_prev * xi * c
            power_prev = power_prev * xi
        return out

    def matrix(self, a: np.ndarray) -> np.ndarray:
        """Lower-triangular ``(p+2) x (p+2)`` matrix model of a point."""
        n = self.n
        M = _eye(n, a)
        M[1, 0] = a[1]
        P = [v[0] for v in self._powers(a[:1])]
        for r in range(2, n):
            M[r, 0] = a[r]
            for c in range(1, r):
                M[r, c] = P[r - c]
        return M

    def from_matrix(self, M: np.ndarray) -> np.ndarray:
        M = np.asarray(M)
        n = self.n
        if M.shape != (n, n):
            raise GroupError(f"expected a {n}x{n} matrix, got shape {M.shape}")
        a = np.array([M[2, 1], M[1, 0]] + [M[r, 0] for r in range(2, n)], dtype=M.dtype)
        if M.dtype == object:
            same = np.all(self.matrix(a) == M)
        else:
            same = np.allclose(self.matrix(a), M, rtol=0, atol=1e-12)
        if not same:
            raise GroupError("matrix does not match the filiform template")
        return a

    def to_json(self):
        return {"family": self.family, "p": self.p}


class Free32Group(CarnotGroup):
    """Free Carnot group of step three and rank two on R^5.

    ``X_1 = d_1 - x_2/2 d_3 - (x_1^2+x_2^2)/2 d_5``,
    ``X_2 = d_2 + x_1/2 d_3 + (x_1^2+x_2^2)/2 d_4``.
    """

    family = "free-3-2"
    m = 2
    n = 5
    layers = (2, 1, 2)

    def _key(self):
        return (self.family,)

    def __repr__(self):
        return "Free32Group()"

    def multiply(self, a, b):
        x1, x2, x3, x4, x5 = (a[..., i] for i in range(5))
        y1, y2, y3, y4, y5 = (b[..., i] for i in range(5))
        half = _const(Fraction(1, 2), a)
        S = x1 * x1 + x2 * x2 + x1 * y1 + x2 * y2
        return np.stack(
            [
                x1 + y1,
                x2 + y2,
                x3 + y3 + half * (x1 * y2 - x2 * y1),
                x4 + y4 + half * y2 * S + x1 * y3,
                x5 + y5 - half * y1 * S + x2 * y3,
            ],
            axis=-1,
        )

    def inverse(self, a):
        x1, x2, x3, x4, x5 = (a[..., i] for i in range(5))
        return np.stack([-x1, -x2, -x3, -x4 + x1 * x3, -x5 + x2 * x3], axis=-1)

    def exp(self, w):
        xi1, xi2 = w[..., 0], w[..., 1]
        r2 = (xi1 * xi1 + xi2 * xi2) * _const(Fraction(1, 6), w)
        zero = xi1 * 0
        return np.stack([xi1, xi2, zero, xi2 * r2, -xi1 * r2], axis=-1)

    def flow(self, w, x):
        u1, u2 = w[..., 0], w[..., 1]
        x1, x2 = x[..., 0], x[..., 1]
        half = _const(Fraction(1, 2), x)
        third = _const(Fraction(1, 3), x)
        # int_0^1 |x + s u|^2 ds
        quad = x1 * x1 + x2 * x2 + x1 * u1 + x2 * u2 + third * (u1 * u1 + u2 * u2)
        return np.stack(
            [
                x1 + u1,
                x2 + u2,
                x[..., 2] + half * (u2 * x1 - u1 * x2),
                x[..., 3] + half * u2 * quad,
                x[..., 4] - half * u1 * quad,
            ],
            axis=-1,
        )

    def field(self, j, x):
        out = _zeros_like_batch(x.shape, x)
        x1, x2 = x[..., 0], x[..., 1]
        half = _const(Fraction(1, 2), x)
        r = half * (x1 * x1 + x2 * x2)
        if j == 0:
            out[..., 0] = _const(Fraction(1), x)
            out[..., 2] = -half * x2
            out[..., 4] = -r
        else:
            out[..., 1] = _const(Fraction(1), x)
            out[..., 2] = half * x1
            out[..., 3] = r
        return out

    def dmul_left(self, a, b):
        batch = np.broadcast_shapes(a.shape[:-1], b.shape[:-1])
        out = _eye(5, a, batch)
        x1, x2 = a[..., 0], a[..., 1]
        y1, y2, y3 = b[..., 0], b[..., 1], b[..., 2]
        half = _const(Fraction(1, 2), a)
        out[..., 2, 0] = half * y2
        out[..., 2, 1] = -half * y1
        out[..., 3, 0] = half * y2 * (2 * x1 + y1) + y3
        out[..., 3, 1] = half * y2 * (2 * x2 + y2)
        out[..., 4, 0] = -half * y1 * (2 * x1 + y1)
        out[..., 4, 1] = -half * y1 * (2 * x2 + y2) + y3
        return out

    def dmul_right(self, a, b):
        batch = np.broadcast_shapes(a.shape[:-1], b.shape[:-1])
        out = _eye(5, a, batch)
        x1, x2 = a[..., 0], a[..., 1]
        y1, y2 = b[..., 0], b[..., 1]
        half = _const(Fraction(1, 2), a)
        S = x1 * x1 + x2 * x2 + x1 * y1 + x2 * y2
        out[..., 2, 0] = -half * x2
        out[..., 2, 1] = half * x1
        out[..., 3, 0] = half * y2 * x1
        out[..., 3, 1] = half * S + half * y2 * x2
        out[..., 3, 2] = x1
        out[..., 4, 0] = -half * S - half * y1 * x1
        out[..., 4, 1] = -half * y1 * x2
        out[..., 4, 2] = x2
        return out

    def dexp(self, w):
        xi1, xi2 = w[..., 0], w[..., 1]
        out = _zeros_like_batch(w.shape[:-1] + (5, 2), w)
        one = _const(Fraction(1), w)
        sixth = _const(Fraction(1, 6), w)
        third = _const(Fraction(1, 3), w)
        out[..., 0, 0] = one
        out[..., 1, 1] = one
        out[..., 3, 0] = third * xi1 * xi2
        out[..., 3, 1] = sixth * (xi1 * xi1 + 3 * xi2 * xi2)
        out[..., 4, 0] = -sixth * (3 * xi1 * xi1 + xi2 * xi2)
        out[..., 4, 1] = -third * xi1 * xi2
        return out

    def to_json(self):
        return {"family": self.family}


# -- named groups and descriptor parsing --------------------------------


def heisenberg() -> StepTwoGroup:
    """Heisenberg group with ``Q(x, xi) = x1 xi2 - x2 xi1``."""
    return StepTwoGroup([[[0, 1], [-1, 0]]], name="heisenberg")


def non_metivier_example() -> StepTwoGroup:
    """R^3 x R with ``Q(x, y) = x1 y2 - x2 y1``; Q(e_3, .) vanishes."""
    return StepTwoGroup([[[0, 1, 0], [-1, 0, 0], [0, 0, 0]]], name="r3xr")


def group_from_json(data: dict) -> CarnotGroup:
    family = data.get("family")
    if family == "step-two":
        Q = data.get("Q")
        if Q is None:
            raise GroupError("step-two descriptor needs Q")
        g = StepTwoGroup(Q)
        if "m" in data and data["m"] != g.m or "l" in data and data["l"] != g.l:
            raise GroupError("declared m/l do not match the shape of Q")
        return g
    if family == "filiform":
        if "p" not in data:
            raise GroupError("filiform descriptor needs p")
        return FiliformGroup(data["p"])
    if family == "free-3-2":
        return Free32Group()
    raise GroupError(f"unknown group family {family!r}")


def parse_group(spec: str) -> CarnotGroup:
    """Parse ``heisenberg``, ``filiform:p``, ``free32``, ``step2:@file.json`` or a JSON path."""
    spec = spec.strip()
    if spec == "heisenberg":
        return heisenberg()
    if spec in ("r3xr", "non-metivier"):
        return non_metivier_example()
    if spec in ("free32", "free-3-2"):
        return Free32Group()
    if spec == "engel":
        return FiliformGroup(2)
    if spec.startswith("filiform:"):
        try:
            return FiliformGroup(int(spec.split(":", 1)[1]))
        except ValueError as exc:
            raise GroupError(f"bad filiform parameter in {spec!r}") from exc
    path = None
    if spec.startswith("step2:@"):
        path = spec[len("step2:@"):]
    elif spec.startswith("@"):
        path = spec[1:]
    elif spec.endswith(".json"):
        path = spec
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise GroupError(f"cannot read descriptor {path!r}: {exc}") from exc
        return group_from_json(data)
    raise GroupError(f"unknown group {spec!r}")


# -- points -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GroupPoint:
    group: CarnotGroup
    coords: np.ndarray
    mode: str = EXACT

    def __post_init__(self):
        coords = to_mode(self.coords, self.mode)
        if coords.shape != (self.group.n,):
            raise GroupError(f"expected {self.group.n} coordinates, got {coords.shape[0]}")
        object.__setattr__(self, "coords", coords)

    @classmethod
    def identity(cls, group: CarnotGroup, mode: str = EXACT) -> "GroupPoint":
        return cls(group, group.identity(mode), mode)

    def layers(self) -> list[np.ndarray]:
        return [self.coords[s] for s in self.group.layer_slices()]

    def __eq__(self, other):
        if not isinstance(other, GroupPoint):
            return NotImplemented
        return self.group == other.group and bool(np.all(self.coords == other.coords))

    def __repr__(self):
        return f"GroupPoint({self.group!r}, {[format_scalar(v) for v in self.coords]}, {self.mode})"

    def to_json(self) -> dict:
        return {"mode": self.mode, "coords": [format_scalar(v) for v in self.coords]}

    @classmethod
    def from_json(cls, group: CarnotGroup, data: dict) -> "GroupPoint":
        return cls(group, data["coords"], data.get("mode", EXACT))


def _check(g: CarnotGroup, *points: GroupPoint) -> str:
    modes = set()
    for pt in points:
        if pt.group != g:
            raise GroupError(f"point belongs to {pt.group!r}, not {g!r}")
        modes.add(pt.mode)
    if len(modes) > 1:
        raise GroupError("points have different numeric modes")
    return modes.pop() if modes else EXACT


def _hvec(g: CarnotGroup, w, mode: str) -> np.ndarray:
    w = to_mode(w, mode)
    if w.shape != (g.m,):
        raise GroupError(f"horizontal vector must have length {g.m}")
    return w


def multiply(g: CarnotGroup, a: GroupPoint, b: GroupPoint) -> GroupPoint:
    mode = _check(g, a, b)
    return GroupPoint(g, g.multiply(a.coords, b.coords), mode)


def inverse(g: CarnotGroup, a: GroupPoint) -> GroupPoint:
    mode = _check(g, a)
    return GroupPoint(g, g.inverse(a.coords), mode)


def dilate(g: CarnotGroup, lam, a: GroupPoint) -> GroupPoint:
    mode = _check(g, a)
    if lam <= 0:
        raise GroupError("dilation factor must be positive")
    return GroupPoint(g, g.dilate(lam, a.coords), mode)


def exp_horizontal(g: CarnotGroup, w, mode: str = EXACT) -> GroupPoint:
    return GroupPoint(g, g.exp(_hvec(g, w, mode)), mode)


def flow(g: CarnotGroup, w, x: GroupPoint) -> GroupPoint:
    mode = _check(g, x)
    return GroupPoint(g, g.flow(_hvec(g, w, mode), x.coords), mode)


def horizontal_field(g: CarnotGroup, j: int, x: GroupPoint) -> np.ndarray:
    """Value of ``X_j`` at ``x``; ``j`` is 1-based."""
    _check(g, x)
    if not 1 <= j <= g.m:
        raise GroupError(f"field index {j} out of range 1..{g.m}")
    return g.field(j - 1, x.coords)


def matrix_rep(p: int, a: GroupPoint) -> np.ndarray:
    g = FiliformGroup(p)
    _check(g, a)
    return g.matrix(a.coords)


def matrix_rep_inverse(p: int, M, mode: str = EXACT) -> GroupPoint:
    g = FiliformGroup(p)
    M = np.asarray(M, dtype=object if mode == EXACT else float)
    return GroupPoint(g, g.from_matrix(M), mode)


def heisenberg_from_filiform(a: np.ndarray) -> np.ndarray:
    """Linear change of variables filiform(p=1) -> step-two Heisenberg: t -> 2t - xy."""
    x, y, t = a[..., 0], a[..., 1], a[..., 2]
    return np.stack([x, y, 2 * t - x * y], axis=-1)


# -- Metivier test ------------------------------------------------------


@dataclass
class MetivierVerdict:
    metivier: bool
    witness: np.ndarray | None
    witness_rank: int | None
    trials: int
    certified: bool
    note: str

    def to_json(self) -> dict:
        return {
            "metivier_evidence": self.metivier,
            "witness": None if self.witness is None else [format_scalar(v) for v in self.witness],
            "witness_rank": self.witness_rank,
            "trials": self.trials,
            "certified": self.certified,
            "note": self.note,
        }


def _kernel_vector(M: np.ndarray) -> np.ndarray | None:
    """A nonzero rational kernel vector of a square rational matrix, if any."""
    reduced, pivots = linalg.row_echelon(M)
    n = M.shape[1]
    free = [c for c in range(n) if c not in pivots]
    if not free:
        return None
    f = free[0]
    v = [Fraction(0)] * n
    v[f] = Fraction(1)
    for r, c in enumerate(pivots):
        v[c] = -reduced[r][f]
    return np.array(v, dtype=object)


def _pfaffian4(A) -> Fraction:
    return A[0][1] * A[2][3] - A[0][2] * A[1][3] + A[0][3] * A[1][2]


def is_metivier(g: StepTwoGroup, trials: int = 1000, seed: int = 0, certify: bool = True) -> MetivierVerdict:
    """Search for ``x != 0`` with ``y -> Q(x, y)`` not onto.

    ``Q(x, .)`` fails to be onto iff ``x`` lies in the kernel of some nonzero
    combination ``sum_a c_a Q^a``.  Each trial draws a rational ``c`` and an
    ``x``, checks the kernel of ``Q_c`` and the rank at ``x`` exactly.  With
    ``certify`` and ``m <= 4`` the verdict is settled exactly.
    """
    if not isinstance(g, StepTwoGroup):
        raise GroupError("Metivier test needs a step-two group")
    if trials <= 0:
        raise ValueError("trials must be positive")
    rng = np.random.default_rng(seed)
    l, m = g.l, g.m

    def witness_from(x):
        r = linalg.rank(g.vertical_map(x))
        if r < l:
            return MetivierVerdict(False, x, r, trials, True, "counterexample found")
        return None

    for i in range(trials):
        if i % 2 == 0:
            c = rng.integers(-1, 2, size=l)
            if not c.any():
                c[rng.integers(l)] = 1
        else:
            c = rng.integers(-9, 10, size=l)
            if not c.any():
                continue
        Qc = np.einsum("a,ajk->jk", np.array([Fraction(int(v)) for v in c], dtype=object), g.Q)
        x = _kernel_vector(Qc)
        if x is not None:
            found = witness_from(x)
            if found:
                return found
        x = np.array([Fraction(int(v)) for v in rng.integers(-3, 4, size=m)], dtype=object)
        if any(x):
            found = witness_from(x)
            if found:
                return found

    note = f"no counterexample in {trials} trials"
    if not certify or m > 4:
        return MetivierVerdict(True, None, None, trials, False, note)
    if m % 2 == 1:
        x = _kernel_vector(g.Q[0])
        found = witness_from(x)
        if found:
            found.note = "odd horizontal dimension: every skew form is degenerate"
            return found
    if m == 2:
        return MetivierVerdict(True, None, None, trials, True, note + "; certified (m=2)")
    # m == 4: Q_c degenerate iff Pf(Q_c) = 0, a quadratic form in c
    P = np.empty((l, l), dtype=object)
    for a in range(l):
        for b in range(l):
            P[a, b] = (_pfaffian4(g.Q[a] + g.Q[b]) - _pfaffian4(g.Q[a]) - _pfaffian4(g.Q[b])) / 2
            if a == b:
                P[a, b] = _pfaffian4(g.Q[a])
    minors = [linalg.det(P[:k, :k]) for k in range(1, l + 1)]
    definite = all(d > 0 for d in minors) or all((-1) ** (k + 1) * d > 0 for k, d in enumerate(minors))
    if definite:
        return MetivierVerdict(True, None, None, trials, True, note + "; certified (Pfaffian form definite)")
    # indefinite or degenerate: a real zero c exists; recover a float witness
    evals, evecs = np.linalg.eigh(P.astype(float))
    i_neg, i_pos = int(np.argmin(evals)), int(np.argmax(evals))
    if abs(evals[i_neg]) < 1e-14:
        c = evecs[:, i_neg]
    elif abs(evals[i_pos]) < 1e-14:
        c = evecs[:, i_pos]
    else:
        c = np.sqrt(evals[i_pos]) * evecs[:, i_neg] + np.sqrt(-evals[i_neg]) * evecs[:, i_pos]
    Qc = np.einsum("a,ajk->jk", c, g.Qf)
    _, _, vt = np.linalg.svd(Qc)
    x = vt[-1]
    s = np.linalg.svd(g.vertical_map(x), compute_uv=False)
    r = int(np.sum(s > 1e-9 * max(1.0, s.max(initial=0.0))))
    return MetivierVerdict(False, x, r, trials, True, "certified: Pfaffian form has a real zero")
