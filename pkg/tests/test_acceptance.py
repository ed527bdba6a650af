"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` (the summary section at
the end lists every criterion) or as a script.
"""

import time
from fractions import Fraction

import numpy as np
import pytest

from carnot_kit.convexity import (
    cone_probe,
    derivative_sign_check,
    engel_remark42,
    filiform_even,
    filiform_witness,
    free32_axis_check,
    hconvex_scan,
    odd_witness,
)
from carnot_kit.distance import distance_estimate, homogeneous_norm, refine
from carnot_kit.groups import FiliformGroup, Free32Group, heisenberg, is_metivier, non_metivier_example
from carnot_kit.multiexp import filiform_M, submersion_test
from carnot_kit.pansu import DEFAULT_LAMBDAS, pansu_residual, pansu_slope, steptwo_slope
from carnot_kit.sampling import random_rationals, random_step_two
from carnot_kit.steptwo import solve_correction, solve_full

try:
    from conftest import record
except ImportError:  # running as a script
    def record(criterion, ok, detail):
        print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")


STEP_TWO_SHAPES = [(2, 1), (3, 2), (3, 3), (4, 2), (4, 3)]


def step_two_descriptors(seed):
    rng = np.random.default_rng(seed)
    return [random_step_two(rng, m, l) for m, l in STEP_TWO_SHAPES]


def generic_x0(g, seed=0):
    x = np.random.default_rng(seed).standard_normal(g.n)
    return g.dilate(1.0 / homogeneous_norm(g, x), x)


def _all_equal(a, b):
    return bool(np.all(a == b))


def test_criterion_1_algebra():
    t0 = time.time()
    rng = np.random.default_rng(1)
    families = step_two_descriptors(11) + [FiliformGroup(p) for p in range(1, 6)] + [Free32Group()]
    failures = 0
    cases = 1000
    for g in families:
        a, b, c = (random_rationals(rng, (cases, g.n), den=9, span=2) for _ in range(3))
        zero = np.array([Fraction(0)] * g.n, dtype=object)
        ab = g.multiply(a, b)
        failures += int(np.sum(np.any(g.multiply(ab, c) != g.multiply(a, g.multiply(b, c)), axis=-1)))
        failures += int(np.sum(np.any(g.multiply(a, zero) != a, axis=-1)))
        failures += int(np.sum(np.any(g.multiply(zero, a) != a, axis=-1)))
        inv = g.inverse(a)
        failures += int(np.sum(np.any(g.multiply(a, inv) != zero, axis=-1)))
        failures += int(np.sum(np.any(g.multiply(inv, a) != zero, axis=-1)))
        for k, lam in enumerate(random_rationals(rng, 10, den=7, span=3)):
            if lam == 0:
                lam = Fraction(1, 3)
            lam = abs(lam)
            sl = slice(100 * k, 100 * (k + 1))
            lhs = g.dilate(lam, ab[sl])
            rhs = g.multiply(g.dilate(lam, a[sl]), g.dilate(lam, b[sl]))
            failures += int(np.sum(np.any(lhs != rhs, axis=-1)))
    elapsed = time.time() - t0
    ok = failures == 0 and elapsed < 10
    record(1, ok, f"{len(families)} groups x {cases} exact cases, {failures} failures, {elapsed:.2f}s (limit 10s)")
    assert ok


def test_criterion_2_matrix_homomorphism():
    rng = np.random.default_rng(2)
    failures = 0
    for p in range(1, 6):
        g = FiliformGroup(p)
        a = random_rationals(rng, (500, g.n), den=9, span=2)
        b = random_rationals(rng, (500, g.n), den=9, span=2)
        ab = g.multiply(a, b)
        for i in range(500):
            if not _all_equal(g.matrix(a[i]).dot(g.matrix(b[i])), g.matrix(ab[i])):
                failures += 1
    record(2, failures == 0, f"500 pairs for p=1..5, {failures} failures")
    assert failures == 0


def test_criterion_3_filiform_submersion():
    t0 = time.time()
    rng = np.random.default_rng(3)
    problems = []
    for p in range(1, 7):
        g = FiliformGroup(p)
        for _ in range(20):
            zeta = random_rationals(rng, 2, den=9, span=3)
            while zeta[0] == 0:
                zeta = random_rationals(rng, 2, den=9, span=3)
            rep = submersion_test(g, zeta, p + 1)
            if rep.rank != p + 2:
                problems.append(f"p={p} zeta={zeta} rank={rep.rank}")
    for p in range(1, 9):
        minor = filiform_M(p, [Fraction(1), Fraction(0)])
        if minor.det_hat == 0:
            problems.append(f"det M_hat = 0 at p={p}")
    # the necessity statement assumes p >= 2; p = 1 is the Heisenberg group,
    # where every nonzero direction is submersive at q = 2
    for p in range(2, 7):
        g = FiliformGroup(p)
        eta = Fraction(int(rng.integers(1, 9)), int(rng.integers(1, 9)))
        for q in range(1, 9):
            rep = submersion_test(g, np.array([Fraction(0), eta], dtype=object), q)
            if rep.rank >= p + 2:
                problems.append(f"zeta=(0,eta) p={p} q={q} rank={rep.rank}")
    if submersion_test(FiliformGroup(1), [Fraction(0), Fraction(1)], 2).rank != 3:
        problems.append("p=1: (0,1) should be submersive at q=2")
    elapsed = time.time() - t0
    ok = not problems and elapsed < 30
    record(3, ok, f"{len(problems)} problems, {elapsed:.2f}s (limit 30s)" + (f": {problems[:3]}" if problems else ""))
    assert ok


def test_criterion_4_metivier():
    h = is_metivier(heisenberg(), trials=10_000)
    r = is_metivier(non_metivier_example(), trials=10_000)
    witness = r.witness
    ok = h.metivier and h.witness is None and (not r.metivier) and witness is not None and r.witness_rank == 0
    ok = ok and any(v != 0 for v in witness)
    Qx = non_metivier_example().vertical_map(np.array(witness, dtype=object))
    ok = ok and all(v == 0 for v in np.ravel(Qx))
    record(4, ok, f"heisenberg metivier={h.metivier} ({h.trials} trials); r3xr witness={list(map(str, witness))} rank={r.witness_rank}")
    assert ok


def test_criterion_5_steptwo_solver():
    descriptors = step_two_descriptors(5)
    rng = np.random.default_rng(55)
    mismatches, ratios, rescale_drift, xi_dependence = 0, [], 0.0, 0
    for i in range(200):
        g = descriptors[i % 5]
        xi = random_rationals(rng, g.m, den=7, span=2)
        while not any(xi):
            xi = random_rationals(rng, g.m, den=7, span=2)
        z = random_rationals(rng, g.m, den=7, span=2)
        t = random_rationals(rng, g.l, den=7, span=2)
        sol = solve_full(g, xi, z, t)
        if not sol.exact_match:
            mismatches += 1
        if sol.scale == 0:
            continue
        ratio = sol.norm_sum / sol.scale
        ratios.append(ratio)
        for lam in (Fraction(2), Fraction(1, 3)):
            other = solve_correction(g, z * lam, t * lam * lam)
            drift = abs(other.norm_sum / other.scale - ratio) / ratio
            rescale_drift = max(rescale_drift, drift)
        other_xi = solve_full(g, xi * 3 + 1, z, t)
        if not (other_xi.exact_match and _all_equal(other_xi.u, sol.u)):
            xi_dependence += 1
    ok = mismatches == 0 and rescale_drift < 0.01 and xi_dependence == 0 and np.isfinite(max(ratios))
    record(
        5,
        ok,
        f"200 instances, {mismatches} exact mismatches, max ratio {max(ratios):.4g}, "
        f"rescale drift {rescale_drift:.2e} (limit 1%), xi-dependence {xi_dependence}",
    )
    assert ok


def test_criterion_6_pansu_slope():
    t0 = time.time()
    lines, ok = [], True
    cases = [
        (heisenberg(), np.array([2.0, 0.0]), np.array([0.0, 1.0, 1.0])),
        (heisenberg(), np.array([2.0, 0.0]), generic_x0(heisenberg())),
        (FiliformGroup(2), np.array([1.0, 0.0]), generic_x0(FiliformGroup(2))),
    ]
    worst_first_layer = 0.0
    for g, w, x0 in cases:
        rep = pansu_slope(g, w, x0, DEFAULT_LAMBDAS)
        for lam in DEFAULT_LAMBDAS:
            res = pansu_residual(g, w, g.dilate(lam, x0))
            worst_first_layer = max(worst_first_layer, res.solution.first_layer_error)
        lines.append(f"{g!r} slope {rep.slope:.3f}")
        ok = ok and rep.slope is not None and rep.slope >= 1.9
    elapsed = time.time() - t0
    ok = ok and worst_first_layer <= 1e-12 and elapsed < 120
    record(6, ok, "; ".join(lines) + f"; first-layer error {worst_first_layer:.1e}; {elapsed:.1f}s (limit 120s)")
    assert ok


def test_criterion_7_abnormal_steptwo():
    g = non_metivier_example()
    rng = np.random.default_rng(7)
    z0 = rng.standard_normal(g.m)
    t0 = rng.standard_normal(g.l)
    rep = steptwo_slope(g, [0.0, 0.0, 1.0], z0, t0, DEFAULT_LAMBDAS)
    ok = rep.slope is not None and rep.slope >= 1.9
    record(7, ok, f"r3xr, w=(0,0,1): slope {rep.slope:.3f}, {rep.note}")
    assert ok


def test_criterion_8_counterexamples():
    t0 = time.time()
    parts = {}
    S = filiform_even(2)
    d = derivative_sign_check(S, 1000, seed=8)
    scan = hconvex_scan(S, 10_000, 16, seed=8)
    scan_c = hconvex_scan(S.complement(), 10_000, 16, seed=9)
    parts["a"] = d.ok and scan.verdict == "no-violation" and scan_c.verdict == "no-violation"

    s_grid = [Fraction(1, 10**k) for k in range(1, 8)]
    ok_b = True
    for eps in (Fraction(1, 2), Fraction(1, 10)):
        rep = cone_probe(S, [0] * 4, [0, 1], eps, s_grid, samples=16, seed=8)
        doubly = [v for v in rep.violations if v.F < 0 and v.distance < v.radius and S.evaluate(v.point)[()] < 0]
        ok_b = ok_b and len(doubly) >= 1
    parts["b"] = ok_b

    odd = odd_witness(3)
    parts["c"] = odd["pattern_ok"] and odd["interior_all_outside"] and odd["s"] == ["0", "1/48", "1/24"]

    eps, c = Fraction(1, 2), Fraction(1, 10)
    k = c * eps**3
    rows = free32_axis_check((Fraction(3, 5), Fraction(4, 5)), eps, c, [k / 2, k, 2 * k])
    parts["d"] = [r["in_E"] for r in rows] == [False, False, True] and all(r["agrees"] for r in rows) and rows[1]["F"] == "0"

    rep = cone_probe(engel_remark42(), [0] * 4, [0, 1], Fraction(1, 2), s_grid, samples=16, seed=8)
    parts["e"] = bool(rep.violations)

    w = filiform_witness(2, Fraction(1, 2), Fraction(1, 2))
    parts["witness"] = w.certified
    elapsed = time.time() - t0
    ok = all(parts.values()) and elapsed < 300
    record(8, ok, " ".join(f"({k}) {'ok' if v else 'FAIL'}" for k, v in parts.items()) + f"; {elapsed:.1f}s (limit 300s)")
    assert ok


def test_criterion_9_distance_oracle():
    rng = np.random.default_rng(9)
    worst = {"horizontal": 0.0, "dilation": 0.0, "symmetry": 0.0, "refine": 0.0}
    for g in (heisenberg(), FiliformGroup(2), Free32Group()):
        for _ in range(3):
            w = rng.standard_normal(g.m)
            est = distance_estimate(g, np.zeros(g.n), g.exp(w), N=32, restarts=4, seed=1)
            worst["horizontal"] = max(worst["horizontal"], abs(est.value - np.linalg.norm(w)))
        for _ in range(2):
            x = rng.standard_normal(g.n) * 0.7
            base = distance_estimate(g, np.zeros(g.n), x, N=32, seed=2, normalize=False).value
            for lam in (0.5, 2.0):
                scaled = distance_estimate(g, np.zeros(g.n), g.dilate(lam, x), N=32, seed=3, normalize=False).value
                worst["dilation"] = max(worst["dilation"], abs(scaled / base - lam) / lam)
            a, b = rng.standard_normal(g.n) * 0.7, rng.standard_normal(g.n) * 0.7
            ab = distance_estimate(g, a, b, N=32, seed=4).value
            ba = distance_estimate(g, b, a, N=32, seed=5).value
            worst["symmetry"] = max(worst["symmetry"], abs(ab - ba) / ab)
    h = heisenberg()
    for _ in range(20):
        x = rng.standard_normal(3)
        coarse = distance_estimate(h, np.zeros(3), x, N=64, seed=6)
        fine = refine(h, coarse, 512)
        worst["refine"] = max(worst["refine"], abs(coarse.value - fine.value) / fine.value)
    ok = worst["horizontal"] <= 1e-6 and worst["dilation"] <= 1e-3 and worst["symmetry"] <= 1e-6 and worst["refine"] <= 1e-3
    record(9, ok, ", ".join(f"{k} {v:.2e}" for k, v in worst.items()) + " (limits 1e-6, 1e-3, 1e-6, 1e-3)")
    assert ok


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v"]))
