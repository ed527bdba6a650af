from fractions import Fraction

import numpy as np
import pytest

from carnot_kit.convexity import (
    check_line,
    derivative_sign_check,
    engel_remark42,
    expression_set,
    filiform_even,
    filiform_odd,
    filiform_odd_modified,
    free32_axis_check,
    free32_psi4,
    full_space,
    halfspace,
    hconvex_scan,
    line_violation,
    membership,
    odd_witness,
    parse_set,
)
from carnot_kit.groups import FiliformGroup, GroupError, heisenberg
from carnot_kit.numbers import exact_array


def test_membership_classification():
    S = filiform_even(2)
    assert membership(S, exact_array([0, 0, 0, 0])) == "boundary"
    assert membership(S, exact_array([0, 1, 0, 0])) == "interior"
    assert membership(S, exact_array([0, -1, 0, 0])) == "boundary"


def test_complement_flips_membership():
    S = filiform_even(2)
    x = exact_array([Fraction(1, 3), Fraction(-1, 2), 1, Fraction(-2, 3)])
    assert bool(S.contains(x)) != bool(S.complement().contains(x))


def test_line_violation_detection():
    assert line_violation(np.array([True, True, False, False])) is None
    assert line_violation(np.array([True, False, True])) == (0, 1, 2)
    assert line_violation(np.array([False, False])) is None


@pytest.mark.parametrize(
    "S", [filiform_even(2), filiform_even(4), free32_psi4((Fraction(3, 5), Fraction(4, 5))), engel_remark42()], ids=lambda S: S.name
)
def test_derivative_identities(S):
    assert derivative_sign_check(S, samples=100, seed=0).ok


def test_even_set_scan_clean_and_odd_set_has_witness():
    assert hconvex_scan(filiform_even(2), lines=500, grid=16, seed=0).verdict == "no-violation"
    assert hconvex_scan(filiform_odd(3), lines=2000, grid=32, seed=0).verdict == "witness"


def test_odd_modified_scan_clean():
    assert hconvex_scan(filiform_odd_modified(3), lines=500, grid=16, seed=1).verdict == "no-violation"


def test_odd_witness_pattern():
    out = odd_witness(3)
    assert out["pattern_ok"] and out["interior_all_outside"]


def test_check_line_reports_in_out_in():
    S = filiform_odd(3)
    V = exact_array([-1, 1])
    s = [Fraction(0), Fraction(1, 48), Fraction(1, 24)]
    assert check_line(S, exact_array([0] * 5), V, s) is not None


def test_free32_axis_sign_table():
    eps, c = Fraction(1, 2), Fraction(1, 10)
    k = c * eps**3
    rows = free32_axis_check((Fraction(3, 5), Fraction(4, 5)), eps, c, [k / 2, k, 2 * k])
    assert [r["in_E"] for r in rows] == [False, False, True]
    assert all(r["agrees"] for r in rows)


def test_expression_and_named_sets():
    g = heisenberg()
    S = expression_set(g, "x1**2 - x3 > 0")
    assert S.strict
    assert S.contains(exact_array([1, 0, 0]))
    assert not S.contains(exact_array([0, 0, 0]))
    assert parse_set("filiform-even:2").name == filiform_even(2).name
    assert parse_set("full", g).contains(exact_array([5, 5, 5]))
    assert halfspace(g).contains(exact_array([0, -1, 2]))
    assert full_space(g).to_json()


def test_parameter_validation():
    with pytest.raises(GroupError):
        filiform_even(3)
    with pytest.raises(GroupError):
        filiform_odd(4)
    with pytest.raises(GroupError):
        membership(filiform_even(2), exact_array([0, 0]))
