import numpy as np
import pytest

from carnot_kit.distance import (
    ball_reach,
    distance_estimate,
    homogeneous_norm,
    homogeneous_norm_power,
    length,
    norm_distance_equivalence,
    refine,
)
from carnot_kit.groups import FiliformGroup, heisenberg
from carnot_kit.numbers import exact_array


def test_horizontal_segment_is_exact():
    g = heisenberg()
    est = distance_estimate(g, np.zeros(3), g.exp(np.array([0.6, -0.8])), N=16, restarts=2, seed=0)
    assert est.ok
    assert abs(est.value - 1.0) < 1e-8


def test_heisenberg_vertical_close_to_known_value():
    est = distance_estimate(heisenberg(), np.zeros(3), np.array([0.0, 0.0, 1.0]), N=32, restarts=4, seed=0)
    assert est.ok
    # sqrt(2 pi) for this normalisation of the law
    assert abs(est.value - np.sqrt(2 * np.pi)) < 5e-3
    assert est.value >= np.sqrt(2 * np.pi) - 1e-9


def test_triangle_inequality():
    g = FiliformGroup(2)
    rng = np.random.default_rng(0)
    a, b, c = (rng.standard_normal(4) * 0.5 for _ in range(3))
    dab = distance_estimate(g, a, b, N=24, restarts=4, seed=1).value
    dbc = distance_estimate(g, b, c, N=24, restarts=4, seed=2).value
    dac = distance_estimate(g, a, c, N=24, restarts=4, seed=3).value
    assert dac <= dab + dbc + 1e-6


def test_left_invariance():
    g = heisenberg()
    rng = np.random.default_rng(3)
    a, b, h = (rng.standard_normal(3) for _ in range(3))
    d1 = distance_estimate(g, a, b, N=24, restarts=4, seed=4).value
    d2 = distance_estimate(g, g.multiply(h, a), g.multiply(h, b), N=24, restarts=4, seed=4).value
    assert abs(d1 - d2) < 1e-6 * d1


def test_endpoint_residual_reported():
    est = distance_estimate(heisenberg(), np.zeros(3), np.array([0.3, 0.1, 0.5]), N=16, restarts=2, seed=0)
    assert est.residual < 1e-9
    assert abs(length(est.controls) - est.value) < 1e-12
    assert est.to_json()["status"] == est.status


def test_refine_does_not_lose_feasibility():
    g = heisenberg()
    coarse = distance_estimate(g, np.zeros(3), np.array([0.2, 0.4, -0.3]), N=16, restarts=2, seed=0)
    fine = refine(g, coarse, 64)
    assert fine.ok and fine.N == 64
    assert abs(fine.value - coarse.value) < 5e-3


def test_small_grid_rejected():
    with pytest.raises(ValueError):
        distance_estimate(heisenberg(), np.zeros(3), np.ones(3), N=2)


def test_homogeneous_norm_exact_power():
    g = FiliformGroup(2)
    x = exact_array([1, 0, 0, 8])
    # layers: |(1,0)| = 1, |0|, |8|^(1/3) = 2
    assert homogeneous_norm_power(g, x) == 2**12
    assert abs(homogeneous_norm(g, [1, 0, 0, 8]) - 2.0) < 1e-12


def test_norm_distance_equivalence_bounds():
    eq = norm_distance_equivalence(heisenberg(), samples=10, seed=0, N=16, restarts=2)
    assert 0 < eq.c_low <= eq.c_high < 10


def test_ball_reach():
    g = heisenberg()
    near = ball_reach(g, np.zeros(3), 1.0, np.array([0.1, 0.1, 0.01]), seed=0)
    far = ball_reach(g, np.zeros(3), 0.1, np.array([1.0, 0.0, 0.0]), seed=0)
    assert near.inside and near.verdict == "inside-certified"
    assert not far.inside
    with pytest.raises(ValueError):
        ball_reach(g, np.zeros(3), 0.0, np.zeros(3))
