import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridco.grid_model import load_case
from gridco.market import (
    BidConstraintState,
    MarketEnv,
    annualization_factor,
    bid_price,
    constrain_bid,
    episode_return,
    total_return,
)
from builders import monopoly, two_bus


def test_bid_price_examples():
    assert bid_price(0.0, 50.0, 1.0) == 50.0
    assert bid_price(1.0, 50.0, 1.0) == 100.0
    assert bid_price(0.8, 55.0, 1.0) == pytest.approx(99.0)


def test_bid_price_out_of_range(caplog):
    with caplog.at_level(logging.WARNING):
        assert bid_price(1.2, 50.0, 1.0) == 100.0
    assert "clamping" in caplog.text
    with pytest.raises(ValueError):
        bid_price(-0.1, 50.0, 1.0, strict=True)


def test_constrain_bid_examples():
    bid, st1 = constrain_bid(60.0, BidConstraintState.start(50.0))
    assert bid == pytest.approx(55.0)
    assert (st1.prev_bid, st1.episode_min, st1.episode_max) == pytest.approx((55.0, 50.0, 55.0))
    assert constrain_bid(46.0, BidConstraintState.start(50.0))[0] == 46.0
    state = BidConstraintState(prev_bid=74.0, episode_min=50.0, episode_max=74.0)
    assert constrain_bid(80.0, state)[0] == pytest.approx(75.0)
    with pytest.raises(ValueError):
        constrain_bid(0.0, state)


@settings(max_examples=200)
@given(st.floats(10, 100), st.lists(st.floats(1, 500), min_size=1, max_size=60))
def test_constraint_invariants_hold_for_any_proposals(start, proposals):
    state = BidConstraintState.start(start)
    prev = start
    series = [start]
    for p in proposals:
        lo, hi = state.interval()
        bid, state = constrain_bid(p, state)
        # projection onto [lo, hi]
        assert bid == pytest.approx(min(max(p, lo), hi))
        assert 0.9 * prev * (1 - 1e-12) <= bid <= 1.1 * prev * (1 + 1e-12)
        assert state.episode_min <= state.prev_bid <= state.episode_max
        assert state.episode_max / state.episode_min <= 1.5 + 1e-9
        prev = bid
        series.append(bid)
    assert max(series) / min(series) <= 1.5 + 1e-9


def test_returns():
    assert episode_return([100, 100], 0.99) == pytest.approx(199.0)
    assert episode_return([0, 0, 0], 0.99) == 0.0
    assert episode_return([0, 0, 300], 0.99) == pytest.approx(294.03)
    assert total_return([655_945.0], 182.5, 8.14e6) == pytest.approx(-127.85e6, rel=1e-4)
    assert total_return([0.0, 0.0], 182.5, 0.0) == 0.0
    assert total_return([400.0, 600.0], 1.0, 0.0) == -1000.0
    assert annualization_factor(48) == 182.5
    with pytest.raises(ValueError):
        total_return([1.0], 0.0, 0.0)


def test_reset_on_30_bus():
    case = load_case("ieee30").with_candidates(["4-12", "27-28"])
    env = MarketEnv(case)
    obs = env.reset([0.0, 0.0])
    assert len(obs) == 3
    for o, i in zip(obs, case.strategic):
        assert o.shape == (4,)
        assert o[0] == pytest.approx(case.total_demand(0) / case.peak_total_demand)
        g = case.generators[i]
        assert o[1] == pytest.approx(g.marginal_cost / (g.marginal_cost * (1 + g.alpha)))
    obs = env.reset([76.1, 0.0])
    np.testing.assert_allclose(obs[0][2:], [0.761, 0.0])
    with pytest.raises(ValueError):
        env.reset([1.0])


def test_monopoly_step():
    env = MarketEnv(monopoly(T=2))
    env.reset([])
    out = env.step([1.0])
    assert out.applied_bids[0] == pytest.approx(55.0)
    assert out.rewards[0] == pytest.approx(250.0)
    assert out.observations[0][1] == pytest.approx(55.0 / 100.0)
    assert not out.done
    env.reset([])
    out = env.step([0.0])
    assert out.applied_bids[0] == 50.0 and out.rewards[0] == 0.0


def test_two_bus_truthful_rewards_are_zero():
    env = MarketEnv(two_bus())
    env.reset([0.0])
    out = env.step([0.0, 0.0])
    np.testing.assert_allclose(out.rewards, [0.0, 0.0], atol=1e-9)
    np.testing.assert_allclose(out.clearing.gen_price, [10.0, 20.0], atol=1e-9)
    assert out.done
    with pytest.raises(RuntimeError):
        env.step([0.0, 0.0])


def test_reward_formula_with_congestion():
    env = MarketEnv(two_bus())
    env.reset([0.0])
    out = env.step([1.0, 1.0])
    res = out.clearing
    costs = np.array([10.0, 20.0])
    np.testing.assert_allclose(out.rewards, (res.gen_price - costs) * res.dispatch)
    assert (out.rewards >= 0).all()


def test_infeasible_clearing_is_flagged():
    env = MarketEnv(two_bus(line_cap=0.0, bids=(10.0, 20.0), demand=150.0), shed_penalty=None)
    env.reset([0.0])
    out = env.step([0.0, 0.0])
    assert out.infeasible and out.done and out.clearing is None


def test_episode_is_deterministic_and_design_fixed():
    case = load_case("ieee30").with_candidates(["4-12", "27-28"])
    rng = np.random.default_rng(0)
    actions = rng.random((6, 3))

    def roll():
        env = MarketEnv(case, horizon=6)
        obs = [env.reset([12.0, 3.0])]
        outs = []
        for a in actions:
            o = env.step(a)
            outs.append(o)
            obs.append(o.observations)
        return obs, outs

    o1, r1 = roll()
    o2, r2 = roll()
    for a, b in zip(r1, r2):
        assert np.array_equal(a.rewards, b.rewards)
        assert np.array_equal(a.applied_bids, b.applied_bids)
        assert np.array_equal(a.clearing.lmp, b.clearing.lmp)
    designs = {tuple(o[2:]) for step in o1 for o in step}
    assert designs == {(0.12, 0.03)}


def test_non_strategic_units_bid_cost():
    case = load_case("ieee30")
    env = MarketEnv(case, horizon=1)
    env.reset(np.zeros(6))
    out = env.step([1.0, 1.0, 1.0])
    for i, g in enumerate(case.generators):
        if not g.strategic:
            assert out.applied_bids[i] == g.marginal_cost
        else:
            assert out.applied_bids[i] == pytest.approx(55.0)
