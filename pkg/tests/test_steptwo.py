from fractions import Fraction

import numpy as np
import pytest

from carnot_kit.groups import GroupError, heisenberg, non_metivier_example, FiliformGroup
from carnot_kit.multiexp import gamma
from carnot_kit.numbers import Surd, exact_array
from carnot_kit.sampling import random_rationals, random_step_two
from carnot_kit.steptwo import (
    basis_pairs,
    bound_constant,
    chain_upper_bound,
    choose_p,
    solve_correction,
    solve_full,
    target_point,
)


def test_heisenberg_exact_reconstruction():
    g = heisenberg()
    sol = solve_full(g, [1, 0], [Fraction(1, 2), 1], [3])
    assert sol.exact_match and sol.p == choose_p(g) == 9
    # sqrt(3) entries stay symbolic
    assert any(isinstance(v, Surd) for v in sol.u.ravel())


def test_negative_vertical_component():
    g = non_metivier_example()
    sol = solve_full(g, [1, 2, 0], [0, 1, -1], [-2])
    assert sol.exact_match


def test_random_descriptors_reconstruct():
    rng = np.random.default_rng(3)
    for m, l in [(2, 1), (3, 3), (4, 2)]:
        g = random_step_two(rng, m, l)
        for _ in range(5):
            xi = random_rationals(rng, m)
            sol = solve_full(g, xi, random_rationals(rng, m), random_rationals(rng, l))
            assert sol.exact_match


def test_float_mode_residual_small():
    g = non_metivier_example()
    sol = solve_full(g, [0.3, -0.2, 1.0], [0.1, 0.2, 0.3], [-0.7], mode="float")
    assert sol.residual < 1e-12


def test_solution_scales_with_dilation():
    g = heisenberg()
    a = solve_correction(g, [1, 1], [2])
    b = solve_correction(g, [3, 3], [18])
    assert abs(b.norm_sum - 3 * a.norm_sum) < 1e-12


def test_bound_constant_holds():
    rng = np.random.default_rng(4)
    g = random_step_two(rng, 3, 2)
    C = bound_constant(g)
    for _ in range(20):
        sol = solve_correction(g, rng.standard_normal(3), rng.standard_normal(2), mode="float")
        assert sol.norm_sum <= C * sol.scale + 1e-12


def test_basis_pairs_span():
    g = non_metivier_example()
    pairs = basis_pairs(g)
    assert len(pairs.pairs) == g.l


def test_chain_upper_bound_at_least_distance_lower_bound():
    g = heisenberg()
    ub = chain_upper_bound(g, [1.0, 0.0], [0.0, 0.0], [0.0])
    assert abs(ub - 1.0) < 1e-12


def test_target_point_and_gamma_agree_without_correction():
    g = heisenberg()
    p = choose_p(g)
    xi = exact_array([Fraction(1, 3), Fraction(1, 2)])
    zero_m, zero_l = exact_array([0, 0]), exact_array([0])
    assert np.all(gamma(g, np.stack([xi] * p)) == target_point(g, p, xi, zero_m, zero_l))


def test_rejects_non_step_two():
    with pytest.raises(GroupError):
        solve_correction(FiliformGroup(2), [0, 0], [0])
