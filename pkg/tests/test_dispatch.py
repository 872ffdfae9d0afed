import numpy as np
import pytest

from gridreg.dispatch import (
    CommonBlockError,
    CostModel,
    check_optimal_feasibility,
    compensable_basis,
    compensable_projector,
    decompose_demand,
    generation_cost,
    optimal_dispatch,
    optimal_dispatch_lq,
)
from gridreg.exosystem import Exosystem, RotationBlock, SinusoidMode

from conftest import LOAD_AFTER, LOAD_BEFORE
from oracles import grid_search_dispatch_2node, projected_gradient_dispatch


def test_four_area_dispatch_frozen_values(four_area):
    _, _, cost, _ = four_area
    disp = optimal_dispatch(cost, LOAD_AFTER)
    expect = np.array(
        [1.1800000000000002, 1.5733333333333335, 0.78666666666666674, 2.3600000000000003]
    )
    assert np.max(np.abs(disp.u - expect)) < 1e-14
    assert disp.multiplier == pytest.approx(-1.1800000000000002, rel=0, abs=1e-14)
    assert disp.cost == pytest.approx(3.4810000000000008, rel=0, abs=1e-13)
    assert generation_cost(cost, np.asarray(LOAD_AFTER)) == pytest.approx(
        4.9378125, rel=0, abs=1e-13
    )
    pre = optimal_dispatch(cost, LOAD_BEFORE)
    assert pre.cost == pytest.approx(3.0250000000000004, rel=0, abs=1e-13)
    assert generation_cost(cost, np.asarray(LOAD_BEFORE)) == pytest.approx(4.3125, rel=0, abs=1e-13)


def test_dispatch_meets_total_demand_and_kkt(four_area):
    _, _, cost, _ = four_area
    rng = np.random.default_rng(17)
    for _ in range(20):
        Pl = rng.uniform(-0.5, 2.5, size=4)
        disp = optimal_dispatch(cost, Pl)
        assert np.sum(disp.u) == pytest.approx(np.sum(Pl), abs=1e-12)
        # stationarity: marginal costs equalize at the shadow price
        marginal = cost.q * disp.u
        assert np.max(np.abs(marginal + disp.multiplier)) < 1e-12


def test_dispatch_matches_projected_gradient_oracle():
    rng = np.random.default_rng(29)
    for _ in range(10):
        n = int(rng.integers(2, 7))
        cost = CostModel(rng.uniform(0.4, 2.0, size=n), r=rng.uniform(-0.3, 0.3, size=n))
        Pl = rng.uniform(0.0, 2.0, size=n)
        disp = optimal_dispatch_lq(cost, Pl)
        ref = projected_gradient_dispatch(cost, Pl)
        assert np.max(np.abs(disp.u - ref)) < 1e-9
        assert disp.cost <= generation_cost(cost, ref) + 1e-12


def test_dispatch_beats_any_feasible_candidate(four_area):
    _, _, cost, _ = four_area
    rng = np.random.default_rng(37)
    disp = optimal_dispatch(cost, LOAD_AFTER)
    for _ in range(200):
        v = rng.normal(size=4)
        v -= v.mean()  # stay on the balance hyperplane
        assert generation_cost(cost, disp.u + 0.3 * v) >= disp.cost - 1e-12


def test_two_node_grid_search():
    cost = CostModel(np.array([1.3, 0.6]), r=np.array([0.1, -0.05]))
    Pl = np.array([1.1, 0.7])
    disp = optimal_dispatch_lq(cost, Pl)
    u1, c = grid_search_dispatch_2node(cost, Pl, disp.u[0] - 1.0, disp.u[0] + 1.0, 200001)
    assert abs(u1 - disp.u[0]) <= 1e-5
    assert abs(c - disp.cost) <= 1e-9


def test_projector_annihilates_compensable_direction():
    rng = np.random.default_rng(41)
    for _ in range(50):
        n = int(rng.integers(2, 9))
        cost = CostModel(rng.uniform(0.3, 2.5, size=n))
        P = compensable_projector(cost)
        d = compensable_basis(cost)
        assert np.max(np.abs(P @ d)) < 1e-14
        assert np.linalg.matrix_rank(P) == n - 1


def test_decompose_demand_classification(four_area):
    _, _, cost, _ = four_area
    qinv = 1.0 / cost.q
    good = Exosystem(
        constant=np.asarray(LOAD_BEFORE),
        common=RotationBlock.from_modes([SinusoidMode(0.4, 0.05)]),
        common_injection=0.3 * qinv,
    )
    parts = decompose_demand(good, cost)
    assert len(parts) == 1
    assert parts[0].kind == "common"
    assert parts[0].compensable
    bad = Exosystem(
        constant=np.asarray(LOAD_BEFORE),
        common=RotationBlock.from_modes([SinusoidMode(0.4, 0.05)]),
        common_injection=np.array([1.0, 0.0, 0.0, 0.1]),
    )
    with pytest.raises(CommonBlockError):
        decompose_demand(bad, cost)


def test_optimal_feasibility_report(four_area):
    g, p, cost, _ = four_area
    rep = check_optimal_feasibility(g, p, cost, np.asarray(LOAD_AFTER))
    assert rep.passed
    heavy = np.array([40.0, 0.0, 0.0, 0.0])
    rep = check_optimal_feasibility(g, p, cost, heavy)
    assert not rep.passed


def test_cost_model_validation():
    with pytest.raises(ValueError):
        CostModel(np.array([1.0, -0.5]))
    with pytest.raises(ValueError):
        CostModel(np.array([1.0, 1.0]), r=np.array([0.1]))
