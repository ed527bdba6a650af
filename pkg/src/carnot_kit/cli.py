"""Command-line entry point: ``carnot-kit <subcommand> ...``.

Exit status is 0 on success, 1 when a verification inside the run fails and 2
on usage errors (bad flags, unknown groups, malformed vectors or sets).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import groups
from .groups import GroupError, GroupPoint, StepTwoGroup, parse_group
from .numbers import EXACT, FLOAT, MODES, as_fraction, format_scalar

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def parse_vector(text: str, mode: str = EXACT) -> np.ndarray:
    try:
        parts = [p for p in text.replace(" ", "").split(",") if p]
        if mode == EXACT:
            return np.array([as_fraction(p) for p in parts], dtype=object)
        return np.array([float(Fraction(p)) for p in parts], dtype=float)
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"malformed vector {text!r}") from exc


def parse_scalar(text: str) -> Fraction:
    try:
        return as_fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"malformed number {text!r}") from exc


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Fraction):
        return format_scalar(obj)
    return obj


class Output:
    """Collects the JSON payload and optional CSV rows, then writes them once."""

    def __init__(self, args):
        self.args = args
        self.payload: dict = {}
        self.header: list[str] | None = None
        self.rows: list[list] = []

    def table(self, header: list[str], rows) -> None:
        self.header = header
        self.rows = [list(r) for r in rows]

    def _csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header or [])
        for r in self.rows:
            w.writerow([format_scalar(v) if isinstance(v, Fraction) else ("" if v is None else v) for v in r])
        return buf.getvalue()

    def emit(self) -> None:
        text_json = json.dumps(_jsonable(self.payload), indent=2) + "\n"
        fmt = self.args.format
        out = self.args.out
        if fmt == "csv" and self.header is None:
            raise UsageError(f"{self.args.command} has no CSV output")
        if out:
            path = Path(out)
            path.parent.mkdir(parents=True, exist_ok=True)
            if fmt == "csv":
                path.write_text(self._csv())
                path.with_suffix(".json").write_text(text_json)
            else:
                path.write_text(text_json)
                if self.header is not None:
                    path.with_suffix(".csv").write_text(self._csv())
        else:
            sys.stdout.write(self._csv() if fmt == "csv" else text_json)


# -- subcommands ------------------------------------------------------------


def cmd_group(args, out: Output) -> int:
    g = parse_group(args.group)
    mode = args.mode
    if args.op == "mul":
        a, b = _point(g, args.a, mode), _point(g, args.b, mode)
        res = groups.multiply(g, a, b)
    elif args.op == "inv":
        res = groups.inverse(g, _point(g, args.a, mode))
    elif args.op == "exp":
        if args.w is None:
            raise UsageError("exp needs --w")
        res = groups.exp_horizontal(g, parse_vector(args.w, mode), mode)
    else:
        if args.lam is None:
            raise UsageError("dilate needs --lam")
        lam = parse_scalar(args.lam) if mode == EXACT else float(parse_scalar(args.lam))
        res = groups.dilate(g, lam, _point(g, args.a, mode))
    out.payload = {"op": args.op, "group": g.to_json(), "mode": mode, "result": res.to_json()["coords"]}
    return EXIT_OK


def _point(g, text, mode) -> GroupPoint:
    if text is None:
        raise UsageError("missing point argument")
    return GroupPoint(g, parse_vector(text, mode), mode)


def cmd_submersion(args, out: Output) -> int:
    from .multiexp import submersion_test

    g = parse_group(args.group)
    rep = submersion_test(g, parse_vector(args.xi, args.mode), args.p, rtol=args.rtol, mode=args.mode)
    out.payload = rep.to_json()
    out.payload["p"] = args.p
    return EXIT_OK


def cmd_openness(args, out: Output) -> int:
    from .multiexp import openness_probe

    g = parse_group(args.group)
    radii = [float(r) for r in args.radii.split(",")] if args.radii else None
    rep = openness_probe(g, parse_vector(args.xi, FLOAT), args.p, args.eps, args.targets, args.seed, radii=radii)
    out.payload = rep.to_json()
    out.table(["radius", "coverage"], zip(rep.radii, rep.coverage))
    if args.plot:
        from .plotting import plot_openness

        plot_openness(rep, args.plot)
    return EXIT_OK


def cmd_solve_step2(args, out: Output) -> int:
    from .steptwo import basis_pairs, bound_constant, solve_full

    g = parse_group(args.group)
    if not isinstance(g, StepTwoGroup):
        raise UsageError("solve-step2 needs a step-two group")
    mode = args.mode
    sol = solve_full(g, parse_vector(args.xi, mode), parse_vector(args.z, mode), parse_vector(args.t, mode), mode)
    pairs = basis_pairs(g)
    out.payload = sol.to_json()
    out.payload["pairs"] = pairs.to_json()["pairs"]
    out.payload["bound_constant"] = bound_constant(g, pairs)
    out.table(["j"] + [f"u{i + 1}" for i in range(g.m)], [[j + 1, *row] for j, row in enumerate(sol.u)])
    if mode == EXACT:
        return EXIT_OK if sol.exact_match else EXIT_FAIL
    return EXIT_OK if sol.residual < 1e-9 else EXIT_FAIL


def cmd_distance(args, out: Output) -> int:
    from .distance import distance_estimate, refine

    g = parse_group(args.group)
    a = parse_vector(args.a, FLOAT) if args.a else np.zeros(g.n)
    b = parse_vector(args.b, FLOAT)
    if a.shape != (g.n,) or b.shape != (g.n,):
        raise UsageError(f"points need {g.n} coordinates")
    est = distance_estimate(g, a, b, args.N, args.restarts, args.seed)
    if args.refine:
        est = refine(g, est, args.refine)
    out.payload = est.to_json()
    out.table(["segment"] + [f"u{i + 1}" for i in range(g.m)], [[j + 1, *row] for j, row in enumerate(est.controls.tolist())])
    if args.plot:
        from .plotting import plot_path

        plot_path(g, est.controls, args.plot, title=f"d_est = {est.value:.6g}")
    return EXIT_OK if est.ok else EXIT_FAIL


def cmd_pansu(args, out: Output) -> int:
    from .pansu import DEFAULT_LAMBDAS, pansu_slope, steptwo_slope

    g = parse_group(args.group)
    lambdas = [float(v) for v in args.lambdas.split(",")] if args.lambdas else list(DEFAULT_LAMBDAS)
    w = parse_vector(args.w, FLOAT)
    if args.steptwo:
        if not isinstance(g, StepTwoGroup):
            raise UsageError("--steptwo needs a step-two group")
        if not (args.z0 and args.t0):
            raise UsageError("--steptwo needs --z0 and --t0")
        rep = steptwo_slope(g, w, parse_vector(args.z0, FLOAT), parse_vector(args.t0, FLOAT), lambdas)
    else:
        if not args.x0:
            raise UsageError("pansu needs --x0")
        rep = pansu_slope(g, w, parse_vector(args.x0, FLOAT), lambdas, p=args.p, with_distance=args.with_distance, seed=args.seed)
    out.payload = rep.to_json()
    out.payload["method"] = "steptwo-chain" if args.steptwo else "perturbation"
    out.table(["lambda", "r_upper", "r_est", "chain_norm"], rep.rows())
    if args.plot:
        from .plotting import plot_slope

        plot_slope(rep, args.plot)
    return EXIT_OK


def _set_and_group(args):
    from .convexity import parse_set

    g = parse_group(args.group) if args.group else None
    try:
        return parse_set(args.set, g)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_cone(args, out: Output) -> int:
    from .convexity import cone_probe

    S = _set_and_group(args)
    g = S.group
    vertex = parse_vector(args.vertex, EXACT) if args.vertex else np.array([Fraction(0)] * g.n, dtype=object)
    V = parse_vector(args.V, EXACT)
    if V.shape != (g.m,) or vertex.shape != (g.n,):
        raise UsageError("vertex/direction have the wrong length")
    s_grid = [parse_scalar(v) for v in args.s_grid.split(",")] if args.s_grid else [Fraction(1, 10**k) for k in range(1, 8)]
    rep = cone_probe(S, vertex, V, parse_scalar(args.eps), s_grid, samples=args.samples, seed=args.seed)
    out.payload = rep.to_json()
    out.table(
        ["s", "F", "distance_upper", "radius", "residual"] + [f"x{i + 1}" for i in range(g.n)],
        [[v.s, v.F, v.distance, v.radius, v.residual, *[float(c) for c in v.point]] for v in rep.violations],
    )
    if args.plot:
        from .plotting import plot_cone

        plot_cone(rep, args.plot)
    return EXIT_OK


def cmd_hconvex_scan(args, out: Output) -> int:
    from .convexity import derivative_sign_check, hconvex_scan

    S = _set_and_group(args)
    if args.complement:
        S = S.complement()
    rep = hconvex_scan(S, args.lines, args.grid, args.seed)
    out.payload = rep.to_json()
    status = EXIT_OK
    if args.derivatives:
        base = _set_and_group(args)
        drep = derivative_sign_check(base, args.derivatives, args.seed)
        out.payload["derivative_check"] = drep.to_json()
        status = EXIT_OK if drep.ok else EXIT_FAIL
    out.table(
        ["line", "s1", "s2", "s3"],
        [[i, *w.s] for i, w in enumerate(rep.witnesses)],
    )
    if args.plot:
        from .plotting import plot_scan

        plot_scan(rep, S, args.plot)
    return status


def cmd_witness(args, out: Output) -> int:
    from .convexity import filiform_witness, free32_axis_check, odd_witness, witness_dilation_check

    if args.kind == "filiform":
        w = filiform_witness(args.p, parse_scalar(args.eps), parse_scalar(args.s), seed=args.seed)
        out.payload = w.to_json()
        out.payload["dilation_check"] = witness_dilation_check(w)
        out.table(["c", "certified"], [[c, ok] for c, ok in w.bisection])
        return EXIT_OK if w.certified else EXIT_FAIL
    if args.kind == "odd":
        rep = odd_witness(args.p)
        out.payload = rep
        out.table(["s", "F", "inside"], zip(rep["s"], rep["F"], rep["inside"]))
        return EXIT_OK if rep["pattern_ok"] and rep["interior_all_outside"] else EXIT_FAIL
    xi = parse_vector(args.xi or "1,0", EXACT)
    eps, c = parse_scalar(args.eps), parse_scalar(args.c)
    k = c * eps**3
    s_grid = [parse_scalar(v) for v in args.s_grid.split(",")] if args.s_grid else [k / 2, k, 2 * k]
    try:
        rows = free32_axis_check(xi, eps, c, s_grid)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out.payload = {"xi": [format_scalar(v) for v in xi], "eps": format_scalar(eps), "c": format_scalar(c), "rows": rows}
    out.table(["s", "F", "predicted", "in_E", "agrees"], [[r[k2] for k2 in ("s", "F", "predicted", "in_E", "agrees")] for r in rows])
    return EXIT_OK if all(r["agrees"] for r in rows) else EXIT_FAIL


# -- parser ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--group", help="heisenberg, r3xr, free32, engel, filiform:p, step2:@file.json")
    common.add_argument("--mode", choices=MODES, default=EXACT, help="exact rationals or float64 (default exact)")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--out", help="output path (JSON and, where available, CSV alongside)")
    common.add_argument("--plot", help="write a figure to this path (png, pdf, svg)")

    def seeded(p):
        p.add_argument("--seed", type=int, required=True, help="random seed (required)")

    parser = argparse.ArgumentParser(prog="carnot-kit", description="Carnot group multiexponentials, distances and convex sets.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("group", parents=[common], help="group law operations")
    p.add_argument("op", choices=("mul", "inv", "exp", "dilate"))
    p.add_argument("--a")
    p.add_argument("--b")
    p.add_argument("--w")
    p.add_argument("--lam")
    p.set_defaults(func=cmd_group, needs_group=True)

    p = sub.add_parser("submersion", parents=[common], help="rank of dGamma^(p) at (xi, ..., xi)")
    p.add_argument("--xi", required=True)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--rtol", type=float, default=1e-9)
    p.set_defaults(func=cmd_submersion, needs_group=True)

    p = sub.add_parser("openness", parents=[common], help="local openness probe (CSV: radius, coverage)")
    p.add_argument("--xi", required=True)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--targets", type=int, default=16)
    p.add_argument("--radii")
    seeded(p)
    p.set_defaults(func=cmd_openness, needs_group=True)

    p = sub.add_parser("solve-step2", parents=[common], help="constructive chain in a step-two group (CSV: j, u)")
    p.add_argument("--xi", required=True)
    p.add_argument("--z", required=True)
    p.add_argument("--t", required=True)
    p.set_defaults(func=cmd_solve_step2, needs_group=True)

    p = sub.add_parser("distance", parents=[common], help="distance upper bound (CSV: segment, u)")
    p.add_argument("--a", help="start point (default identity)")
    p.add_argument("--b", required=True)
    p.add_argument("--N", type=int, default=32)
    p.add_argument("--restarts", type=int, default=16)
    p.add_argument("--refine", type=int, help="re-solve on this finer grid")
    seeded(p)
    p.set_defaults(func=cmd_distance, needs_group=True)

    p = sub.add_parser("pansu", parents=[common], help="first-order residual slopes (CSV: lambda, r_upper, r_est, chain_norm)")
    p.add_argument("--w", required=True)
    p.add_argument("--x0")
    p.add_argument("--p", type=int)
    p.add_argument("--lambdas")
    p.add_argument("--with-distance", action="store_true", help="also compute the optimizer residual r_est")
    p.add_argument("--steptwo", action="store_true", help="use the step-two chain with --z0/--t0")
    p.add_argument("--z0")
    p.add_argument("--t0")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_pansu, needs_group=True)

    p = sub.add_parser("cone", parents=[common], help="inner cone probe (CSV: violations)")
    p.add_argument("--set", required=True)
    p.add_argument("--vertex")
    p.add_argument("--V", required=True)
    p.add_argument("--eps", required=True)
    p.add_argument("--s-grid")
    p.add_argument("--samples", type=int, default=16)
    seeded(p)
    p.set_defaults(func=cmd_cone, needs_group=False)

    p = sub.add_parser("hconvex-scan", parents=[common], help="horizontal convexity scan (CSV: witness lines)")
    p.add_argument("--set", required=True)
    p.add_argument("--lines", type=int, default=1000)
    p.add_argument("--grid", type=int, default=32)
    p.add_argument("--complement", action="store_true")
    p.add_argument("--derivatives", type=int, default=0, help="also run the exact derivative identities on this many points")
    seeded(p)
    p.set_defaults(func=cmd_hconvex_scan, needs_group=False)

    p = sub.add_parser("witness", parents=[common], help="counterexample witnesses")
    p.add_argument("--kind", choices=("filiform", "odd", "free32"), default="filiform")
    p.add_argument("--p", type=int, default=2)
    p.add_argument("--eps", default="1/2")
    p.add_argument("--s", default="1/2")
    p.add_argument("--c", default="1/10")
    p.add_argument("--xi")
    p.add_argument("--s-grid")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_witness, needs_group=False)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.needs_group and not args.group:
        parser.print_usage(sys.stderr)
        print(f"carnot-kit {args.command}: --group is required", file=sys.stderr)
        return EXIT_USAGE
    out = Output(args)
    try:
        status = args.func(args, out)
        out.emit()
    except (UsageError, GroupError, ValueError, TypeError, OSError) as exc:
        print(f"carnot-kit {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return status


if __name__ == "__main__":
    sys.exit(main())
