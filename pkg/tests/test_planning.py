import numpy as np
import pytest

from gridco.dcopf import ClearingInfeasible, ClearingInput, clear_market
from gridco.grid_model import load_case
from gridco.planning import stage1_expansion_lp
from builders import single_bus, gen, two_bus
from oracles import grid_argmin


def test_two_bus_expansion_matches_grid_sweep():
    case = two_bus(line_cap=30.0, bids=(50.0, 90.0))
    bids = np.array([50.0, 90.0])

    def J(dl):
        res = clear_market(case, ClearingInput(bids, case.demand(0), [30.0 + dl]))
        return 8760.0 * res.objective + 1e5 * dl

    best, best_j = grid_argmin(J, np.arange(0.0, 61.0))
    plan = stage1_expansion_lp(case, bids, 8760.0)
    assert best == 30.0
    assert plan.increments[0] == pytest.approx(best, abs=1e-6)
    assert plan.total_cost == pytest.approx(best_j)
    assert plan.expansion_cost == pytest.approx(3e6)


def test_expensive_expansion_is_skipped():
    case = two_bus(line_cap=30.0, bids=(50.0, 90.0))
    plan = stage1_expansion_lp(case, np.array([50.0, 90.0]), 1.0)
    assert plan.increments[0] == 0.0


def test_inadequate_generation_is_infeasible():
    case = single_bus([gen("G", 0, 50.0, cap=40.0)], demand=50.0)
    with pytest.raises(ClearingInfeasible):
        stage1_expansion_lp(case, np.array([50.0]), 1.0)


def test_bids_must_be_positive():
    case = two_bus()
    with pytest.raises(ValueError):
        stage1_expansion_lp(case, np.array([0.0, 1.0]), 1.0)


@pytest.fixture(scope="module")
def ieee30_pair():
    return load_case("ieee30").with_candidates(["4-12", "27-28"])


def _bids(case, strategic_bid):
    return np.array([strategic_bid if g.strategic else g.marginal_cost for g in case.generators])


def test_truthful_bids_need_no_expansion(ieee30_pair):
    plan = stage1_expansion_lp(ieee30_pair, _bids(ieee30_pair, 50.0), 8760 / 48)
    np.testing.assert_allclose(plan.increments, 0.0, atol=1e-9)


def test_high_bids_expand_line_4_12_only(ieee30_pair):
    plan = stage1_expansion_lp(ieee30_pair, _bids(ieee30_pair, 90.0), 8760 / 48)
    names = [ieee30_pair.lines[k].name for k in plan.candidates]
    inc = dict(zip(names, plan.increments))
    assert inc["27-28"] == 0.0
    assert inc["4-12"] == pytest.approx(81.4, rel=0.3)
    # the planning objective uses pay-as-bid: 90 $/MWh units are priced out
    strategic = ieee30_pair.strategic
    assert plan.dispatch[:, strategic[1:]].max() <= 1e-9
