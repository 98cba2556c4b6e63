import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridco.dcopf import ClearingInfeasible, ClearingInput, ClearingResult, build_lp, clear_market, operational_cost
from gridco.grid_model import load_case
from builders import gen, single_bus, two_bus
from oracles import vertex_enumeration


@pytest.fixture(scope="module")
def ieee30():
    return load_case("ieee30")


def _clear(case, bids, caps=None, t=0, shed=None):
    caps = case.base_capacities() if caps is None else caps
    return clear_market(case, ClearingInput(bids, case.demand(t), caps, shed))


def test_lp_structure_two_bus():
    case = two_bus()
    lp, layout = build_lp(case, ClearingInput([10, 20], case.demand(0), [30.0], 1e4))
    assert lp.n_vars == 2 + 1 + 2
    assert lp.A_eq.shape[0] == 2 and lp.A_ub.shape[0] == 2
    assert layout.angle_buses == [1] and layout.shed
    lp2, layout2 = build_lp(case, ClearingInput([10, 20], case.demand(0), [30.0]))
    assert lp2.n_vars == 3 and not layout2.shed


def test_lp_structure_30_bus(ieee30):
    lp, _ = build_lp(ieee30, ClearingInput(np.full(ieee30.n_gen, 50.0), ieee30.demand(0), ieee30.base_capacities()))
    assert lp.A_eq.shape[0] == 30
    assert lp.A_ub.shape[0] == 2 * 41


def test_single_bus_price():
    case = single_bus([gen("G", 0, 50.0)], demand=50.0)
    res = _clear(case, [50.0])
    assert res.dispatch[0] == pytest.approx(50.0)
    assert res.lmp[0] == pytest.approx(50.0)
    assert res.operational_cost == pytest.approx(2500.0)


def test_two_bus_congested_matches_vertex_oracle():
    case = two_bus(line_cap=30.0)
    inp = ClearingInput([10.0, 20.0], case.demand(0), [30.0])
    lp, _ = build_lp(case, inp)
    ref = vertex_enumeration(lp.c, lp.A_eq, lp.b_eq, lp.A_ub, lp.b_ub, lp.lower, lp.upper)
    res = clear_market(case, inp)
    assert res.objective == pytest.approx(ref, abs=1e-6)
    np.testing.assert_allclose(res.dispatch, [30.0, 30.0], atol=1e-6)
    np.testing.assert_allclose(res.lmp, [10.0, 20.0], atol=1e-6)
    assert res.flows[0] == pytest.approx(30.0, abs=1e-6)
    assert res.operational_cost == pytest.approx(900.0, abs=1e-6)


def test_two_bus_uncongested_prices_equalise():
    case = two_bus(line_cap=100.0)
    res = _clear(case, [10.0, 20.0], caps=[100.0])
    np.testing.assert_allclose(res.dispatch, [60.0, 0.0], atol=1e-6)
    np.testing.assert_allclose(res.lmp, [10.0, 10.0], atol=1e-6)
    assert res.operational_cost == pytest.approx(600.0)


def test_infeasible_without_shedding_and_shed_when_enabled():
    case = single_bus([gen("G", 0, 50.0, cap=40.0)], demand=50.0)
    with pytest.raises(ClearingInfeasible):
        _clear(case, [50.0])
    res = _clear(case, [50.0], shed=1e4)
    assert res.shed_total == pytest.approx(10.0)
    assert res.lmp[0] == pytest.approx(1e4)
    # shed payments are not part of the operational cost
    assert res.operational_cost == pytest.approx(1e4 * 40.0)


def test_operational_cost_arithmetic():
    z = np.zeros(2)
    r = ClearingResult(np.array([30.0, 30.0]), z, z, z, np.array([10.0, 20.0]), 0.0, z, 0.0)
    assert operational_cost(r) == 900.0
    r.dispatch = np.zeros(2)
    assert operational_cost(r) == 0.0
    r1 = ClearingResult(np.array([50.0]), z, z, z, np.array([50.0]), 0.0, z, 0.0)
    assert operational_cost(r1) == 2500.0


def test_dimension_mismatch(ieee30):
    with pytest.raises(ValueError):
        build_lp(ieee30, ClearingInput([50.0], ieee30.demand(0), ieee30.base_capacities()))
    with pytest.raises(ValueError):
        ClearingInput([0.0, 1.0], [1.0], [1.0])


def _invariants(case, inp, res):
    p = np.array([g.p_max for g in case.generators])
    assert (res.dispatch >= -1e-9).all() and (res.dispatch <= p + 1e-9).all()
    assert (np.abs(res.flows) <= inp.capacities + 1e-6).all()
    inj = case.gen_bus_matrix() @ res.dispatch + res.shed - inp.demands
    np.testing.assert_allclose(case.incidence() @ res.flows, inj, atol=1e-6)
    assert res.operational_cost == pytest.approx(np.dot(res.gen_price, res.dispatch))
    # merchandising surplus is nonnegative
    rent = np.dot(res.lmp, inp.demands - res.shed) - np.dot(res.gen_price, res.dispatch)
    assert rent >= -1e-6


bid_lists = st.lists(st.floats(50, 100), min_size=7, max_size=7)


@settings(max_examples=25, deadline=None)
@given(bid_lists, st.integers(0, 47), st.floats(1.5, 4.0))
def test_30_bus_invariants_and_bid_scaling(ieee30, bids, t, k):
    inp = ClearingInput(bids, ieee30.demand(t), ieee30.base_capacities(), 1e4)
    res = clear_market(ieee30, inp)
    _invariants(ieee30, inp, res)
    scaled = clear_market(ieee30, ClearingInput(np.array(bids) * k, ieee30.demand(t), ieee30.base_capacities(), 1e4 * k))
    np.testing.assert_allclose(scaled.dispatch, res.dispatch, atol=1e-6)
    np.testing.assert_allclose(scaled.lmp, k * res.lmp, rtol=1e-9, atol=1e-6)


@settings(max_examples=25, deadline=None)
@given(bid_lists, st.integers(0, 47), st.integers(0, 5), st.floats(0, 60))
def test_more_capacity_never_raises_objective(ieee30, bids, t, j, extra):
    caps = ieee30.base_capacities()
    base = clear_market(ieee30, ClearingInput(bids, ieee30.demand(t), caps, 1e4))
    caps2 = caps.copy()
    caps2[ieee30.candidates[j]] += extra
    more = clear_market(ieee30, ClearingInput(bids, ieee30.demand(t), caps2, 1e4))
    assert more.objective <= base.objective + 1e-6


def test_uncongested_30_bus_has_uniform_prices(ieee30):
    caps = np.full(ieee30.n_line, 1e4)
    res = _clear(ieee30, np.full(ieee30.n_gen, 50.0) + np.arange(ieee30.n_gen), caps=caps, t=10)
    np.testing.assert_allclose(res.lmp, res.lmp[0], atol=1e-6)
