from fractions import Fraction

import numpy as np
import pytest

from carnot_kit.groups import FiliformGroup, Free32Group, GroupError, heisenberg
from carnot_kit.multiexp import (
    filiform_M,
    gamma,
    gamma_and_jacobian,
    gamma_fast,
    gamma_jacobian_fd,
    openness_probe,
    submersion_test,
    vandermonde_det_hat,
)

GROUPS = [heisenberg(), FiliformGroup(3), Free32Group()]


@pytest.mark.parametrize("g", GROUPS, ids=repr)
def test_prefix_products_match_naive_product(g):
    rng = np.random.default_rng(1)
    chain = np.array([[Fraction(int(k), 4) for k in row] for row in rng.integers(-8, 9, (5, g.m))], dtype=object)
    assert np.all(gamma_fast(g, chain) == gamma(g, chain))


@pytest.mark.parametrize("g", GROUPS, ids=repr)
def test_jacobian_matches_finite_differences(g):
    rng = np.random.default_rng(2)
    chain = rng.standard_normal((4, g.m))
    _, jac = gamma_and_jacobian(g, chain)
    assert np.allclose(jac, gamma_jacobian_fd(g, chain), atol=1e-6)


def test_exact_jacobian_is_exact():
    g = FiliformGroup(2)
    chain = np.array([[Fraction(1, 3), Fraction(2)]] * 3, dtype=object)
    _, jac = gamma_and_jacobian(g, chain)
    assert jac.dtype == object
    assert all(isinstance(v, Fraction) for v in jac.ravel())


def test_heisenberg_needs_two_factors():
    g = heisenberg()
    assert submersion_test(g, [1, 0], 1).rank == 2
    assert submersion_test(g, [1, 0], 2).rank == 3


def test_filiform_rank_pattern():
    for p in range(2, 5):
        g = FiliformGroup(p)
        assert submersion_test(g, [1, 1], p + 1).rank == p + 2
        assert submersion_test(g, [0, 1], p + 3).rank < p + 2


def test_zero_direction_note():
    rep = submersion_test(heisenberg(), [0, 0], 3)
    assert rep.rank < 3 and rep.notes


def test_bad_chain_length():
    with pytest.raises(ValueError):
        submersion_test(heisenberg(), [1, 0], 0)
    with pytest.raises(GroupError):
        submersion_test(heisenberg(), [1, 0, 0], 2)


@pytest.mark.parametrize("p", range(1, 9))
def test_det_hat_closed_form(p):
    minor = filiform_M(p, [1, 0])
    assert minor.det_hat == vandermonde_det_hat(p) != 0


def test_filiform_minor_nonzero_for_xi_nonzero():
    for p in range(1, 5):
        assert filiform_M(p, [Fraction(2, 3), Fraction(1)]).det != 0


def test_openness_probe_covers_submersive_point():
    rep = openness_probe(heisenberg(), [1.0, 0.0], 2, eps=0.5, n_targets=8, seed=0, radii=[1e-3, 1e-2])
    assert rep.full_coverage
    assert rep.coverage[0] == 1.0


def test_openness_probe_rejects_bad_eps():
    with pytest.raises(ValueError):
        openness_probe(heisenberg(), [1.0, 0.0], 2, eps=0, n_targets=4, seed=0)
