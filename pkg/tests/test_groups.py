from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carnot_kit.groups import (
    FiliformGroup,
    Free32Group,
    GroupError,
    heisenberg,
    is_metivier,
    non_metivier_example,
    parse_group,
)
from carnot_kit.numbers import exact_array

fractions = st.fractions(min_value=-3, max_value=3, max_denominator=12)


def vec(n):
    return st.lists(fractions, min_size=n, max_size=n).map(exact_array)


GROUPS = [heisenberg(), non_metivier_example(), FiliformGroup(2), FiliformGroup(4), Free32Group()]


@pytest.mark.parametrize("g", GROUPS, ids=repr)
def test_identity_and_inverse(g):
    rng = np.random.default_rng(0)
    a = exact_array(Fraction(int(k), 7) for k in rng.integers(-14, 15, g.n))
    e = g.identity()
    assert np.all(g.multiply(a, e) == a)
    assert np.all(g.multiply(g.inverse(a), a) == e)


@settings(max_examples=60, deadline=None)
@given(data=st.data())
def test_associativity_and_dilation(data):
    g = data.draw(st.sampled_from(GROUPS))
    a, b, c = (data.draw(vec(g.n)) for _ in range(3))
    lam = data.draw(st.fractions(min_value=Fraction(1, 10), max_value=5, max_denominator=10))
    assert np.all(g.multiply(g.multiply(a, b), c) == g.multiply(a, g.multiply(b, c)))
    assert np.all(g.dilate(lam, g.multiply(a, b)) == g.multiply(g.dilate(lam, a), g.dilate(lam, b)))


@settings(max_examples=40, deadline=None)
@given(data=st.data())
def test_flow_is_right_translation_by_exp(data):
    g = data.draw(st.sampled_from(GROUPS))
    x = data.draw(vec(g.n))
    w = data.draw(vec(g.m))
    assert np.all(g.flow(w, x) == g.multiply(x, g.exp(w)))


@pytest.mark.parametrize("p", [1, 2, 3, 5])
def test_filiform_matrix_roundtrip(p):
    g = FiliformGroup(p)
    rng = np.random.default_rng(p)
    a = exact_array(Fraction(int(k), 5) for k in rng.integers(-10, 11, g.n))
    assert np.all(g.from_matrix(g.matrix(a)) == a)


def test_float_mode_matches_exact():
    g = Free32Group()
    rng = np.random.default_rng(4)
    a = exact_array(Fraction(int(k), 3) for k in rng.integers(-6, 7, g.n))
    b = exact_array(Fraction(int(k), 3) for k in rng.integers(-6, 7, g.n))
    exact = g.multiply(a, b).astype(float)
    approx = g.multiply(a.astype(float), b.astype(float))
    assert np.allclose(exact, approx, atol=1e-12)


def test_batched_multiply_matches_rows():
    g = FiliformGroup(3)
    rng = np.random.default_rng(5)
    a = rng.standard_normal((7, g.n))
    b = rng.standard_normal((7, g.n))
    batch = g.multiply(a, b)
    for i in range(7):
        assert np.allclose(batch[i], g.multiply(a[i], b[i]))


def test_parse_group():
    assert parse_group("heisenberg") == heisenberg()
    assert parse_group("filiform:3") == FiliformGroup(3)
    assert parse_group("engel") == FiliformGroup(2)
    assert parse_group("free32").n == 5
    with pytest.raises(GroupError):
        parse_group("nope")
    with pytest.raises(GroupError):
        parse_group("filiform:0")


def test_metivier_verdicts():
    assert is_metivier(heisenberg(), trials=200).metivier
    v = is_metivier(non_metivier_example(), trials=200)
    assert not v.metivier and v.witness_rank == 0


def test_step_two_requires_bracket_generating():
    from carnot_kit.groups import StepTwoGroup

    Q = np.zeros((1, 2, 2), dtype=object)
    Q[:] = Fraction(0)
    with pytest.raises(GroupError):
        StepTwoGroup(Q)
