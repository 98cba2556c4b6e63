"""Episode-level market environment for strategic bidding agents."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .dcopf import DEFAULT_SHED_PENALTY, ClearingInfeasible, ClearingInput, ClearingResult, clear_market
from .grid_model import capacities

log = logging.getLogger(__name__)

MAX_DAILY_RATIO = 1.5
STEP_RATIO_LOW = 0.9
STEP_RATIO_HIGH = 1.1
HOURS_PER_YEAR = 8760.0


def annualization_factor(horizon):
    """Hours per year over simulated hours."""
    return HOURS_PER_YEAR / horizon


def bid_price(action, marginal_cost, alpha, strict=False):
    """Bid = cost * (alpha * a + 1) for a normalised action a in [0, 1]."""
    if not 0.0 <= action <= 1.0:
        if strict:
            raise ValueError(f"action {action} outside [0, 1]")
        log.warning("clamping action %r into [0, 1]", action)
        action = min(max(action, 0.0), 1.0)
    return marginal_cost * (alpha * action + 1.0)


@dataclass
class BidConstraintState:
    prev_bid: float
    episode_min: float
    episode_max: float

    @classmethod
    def start(cls, bid):
        return cls(bid, bid, bid)

    def interval(self):
        lo = max(STEP_RATIO_LOW * self.prev_bid, self.episode_max / MAX_DAILY_RATIO)
        hi = min(STEP_RATIO_HIGH * self.prev_bid, MAX_DAILY_RATIO * self.episode_min)
        return lo, hi


def constrain_bid(proposed, state):
    """Project a proposed bid onto the feasible ratio interval.

    The interval is [0.9, 1.1] x previous bid intersected with the band that
    keeps the episode max/min ratio within 1.5.  Returns the applied bid and
    the updated state.
    """
    if not proposed > 0:
        raise ValueError(f"proposed bid must be positive, got {proposed}")
    lo, hi = state.interval()
    # prev_bid always lies inside, so the interval cannot be empty
    assert lo <= hi * (1 + 1e-12), (lo, hi, state)
    bid = min(max(proposed, lo), hi)
    return bid, BidConstraintState(bid, min(state.episode_min, bid), max(state.episode_max, bid))


def episode_return(rewards, gamma):
    """Discounted return sum_t gamma^t r(t), t starting at 0."""
    r = np.asarray(rewards, dtype=float)
    return float(np.sum(r * gamma ** np.arange(r.size)))


def total_return(step_costs, w_anu, expansion_cost):
    """Negative annual total cost -(W * sum C_oper + C_exp)."""
    if not w_anu > 0:
        raise ValueError("annualization factor must be positive")
    return -(w_anu * float(np.sum(step_costs)) + expansion_cost)


@dataclass
class StepOutcome:
    observations: list
    rewards: np.ndarray
    clearing: ClearingResult | None
    applied_bids: np.ndarray  # every generator, case order
    t: int
    done: bool
    infeasible: bool = False


class MarketEnv:
    """T-step day-ahead market with one agent per strategic generator.

    Observations are flat vectors ``[load / peak load, previous bid /
    (cost * (1 + alpha)), design / reference capacity ...]``; in discrete
    mode the design entries are the 0/1 upgrade flags themselves.
    """

    def __init__(
        self,
        case,
        mode="continuous",
        fixed_increment=50.0,
        shed_penalty=DEFAULT_SHED_PENALTY,
        reference_capacity=100.0,
        horizon=None,
        strict=False,
    ):
        if mode not in ("continuous", "discrete"):
            raise ValueError(f"unknown design mode {mode!r}")
        self.case = case
        self.mode = mode
        self.fixed_increment = fixed_increment
        self.shed_penalty = shed_penalty
        self.reference_capacity = reference_capacity
        self.horizon = case.horizon if horizon is None else int(horizon)
        if not 0 < self.horizon <= case.horizon:
            raise ValueError(f"horizon {self.horizon} exceeds profile length {case.horizon}")
        self.strict = strict
        self.agents = case.strategic
        self.n_agents = len(self.agents)
        self.n_design = len(case.candidates)
        self.obs_dim = 2 + self.n_design
        self.costs = np.array([g.marginal_cost for g in case.generators])
        self.alphas = np.array([g.alpha for g in case.generators])
        self._peak = max(case.total_demand(t) for t in range(self.horizon))
        self.t = None

    def _design_features(self, design):
        d = np.asarray(design, dtype=float)
        return d if self.mode == "discrete" else d / self.reference_capacity

    def _observe(self, t):
        load = self.case.total_demand(t) / self._peak
        return [
            np.concatenate(([load, self.states[k].prev_bid / (self.costs[i] * (1 + self.alphas[i]))], self._features))
            for k, i in enumerate(self.agents)
        ]

    def reset(self, design, initial_bids=None):
        design = np.asarray(design, dtype=float).ravel()
        if design.size != self.n_design:
            raise ValueError(f"design has {design.size} entries, expected {self.n_design}")
        self.design = design
        self.caps = capacities(self.case, design, self.mode, self.fixed_increment)
        self._features = self._design_features(design)
        if initial_bids is None:
            initial_bids = self.costs[self.agents]
        if len(initial_bids) != self.n_agents:
            raise ValueError(f"need {self.n_agents} initial bids")
        self.states = [BidConstraintState.start(float(b)) for b in initial_bids]
        self.t = 0
        return self._observe(0)

    def step(self, actions):
        if self.t is None or self.t >= self.horizon:
            raise RuntimeError("episode finished; call reset()")
        if len(actions) != self.n_agents:
            raise ValueError(f"need {self.n_agents} actions, got {len(actions)}")
        t = self.t
        bids = self.costs.copy()
        for k, i in enumerate(self.agents):
            proposed = bid_price(float(actions[k]), self.costs[i], self.alphas[i], self.strict)
            bids[i], self.states[k] = constrain_bid(proposed, self.states[k])
        self.t += 1
        done = self.t >= self.horizon
        inp = ClearingInput(bids, self.case.demand(t), self.caps, self.shed_penalty)
        try:
            res = clear_market(self.case, inp)
        except ClearingInfeasible:
            self.t = self.horizon
            return StepOutcome(self._observe(t), np.zeros(self.n_agents), None, bids, t, True, infeasible=True)
        if res.shed_total > 1e-9:
            log.debug("step %d: shed %.3f MW", t, res.shed_total)
        idx = self.agents
        rewards = (res.gen_price[idx] - self.costs[idx]) * res.dispatch[idx]
        nxt = self._observe(min(self.t, self.horizon - 1))
        return StepOutcome(nxt, rewards, res, bids, t, done)
