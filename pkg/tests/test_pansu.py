import numpy as np
import pytest

from carnot_kit.groups import FiliformGroup, GroupError, heisenberg, non_metivier_example
from carnot_kit.pansu import (
    fit_slope,
    pansu_residual,
    pansu_slope,
    select_slice,
    smallest_submersive_p,
    solve_perturbation,
    steptwo_pansu_residual,
    steptwo_slope,
)

LAMBDAS = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3)


def test_smallest_p():
    assert smallest_submersive_p(heisenberg(), [1.0, 0.0]) == 2
    assert smallest_submersive_p(FiliformGroup(2), [1.0, 0.0]) == 3


def test_slice_rejects_non_submersion():
    with pytest.raises(GroupError):
        select_slice(FiliformGroup(2), np.array([0.0, 1.0]), 3)


def test_perturbation_hits_target():
    g = FiliformGroup(2)
    xi = np.array([1.0, 0.0]) / 3
    x = g.dilate(0.05, np.array([0.3, -0.7, 0.5, 0.9]))
    sol = solve_perturbation(g, xi, 3, x)
    assert sol.residual < 1e-12
    assert sol.first_layer_error <= 1e-12


def test_residual_is_nonnegative_and_small():
    g = heisenberg()
    res = pansu_residual(g, np.array([2.0, 0.0]), g.dilate(1e-2, np.array([0.0, 1.0, 1.0])))
    assert 0 <= res.r_upper < 1e-2
    assert res.chain_length >= 2.0 - 1e-12


def test_heisenberg_slope_superlinear():
    rep = pansu_slope(heisenberg(), np.array([2.0, 0.0]), np.array([0.0, 1.0, 1.0]), LAMBDAS)
    assert rep.slope > 1.9
    assert len(rep.rows()) == len(LAMBDAS)


def test_collinear_x0_is_degenerate():
    rep = pansu_slope(heisenberg(), np.array([2.0, 0.0]), np.array([1.0, 0.0, 0.0]), LAMBDAS)
    assert rep.degenerate


def test_too_few_lambdas():
    with pytest.raises(ValueError):
        pansu_slope(heisenberg(), np.array([1.0, 0.0]), np.array([0.0, 1.0, 1.0]), (1e-1, 1e-2))


def test_fit_slope_exact_power():
    lam = np.array([1e-1, 1e-2, 1e-3])
    assert abs(fit_slope(lam, 3 * lam**2) - 2.0) < 1e-12


def test_steptwo_residual_and_slope():
    g = non_metivier_example()
    res = steptwo_pansu_residual(g, [0.0, 0.0, 1.0], np.array([0.01, 0.02, 0.0]), np.array([1e-4]))
    assert res.r >= 0
    rep = steptwo_slope(g, [0.0, 0.0, 1.0], np.array([0.3, -0.2, 0.5]), np.array([0.4]), LAMBDAS)
    assert rep.slope > 1.9
