"""Stage-1 capacity expansion under exogenous (fixed) bids.

A single joint LP over every snapshot of the horizon picks dispatch and
continuous capacity increments on the candidate lines, minimising annualised
bid-based payment plus annual expansion cost.  Line flows use the PTDF form of
the DC network equations, which is equivalent to the angle form on a connected
network and keeps the joint LP small.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dcopf import ClearingInfeasible
from .lp import LinearProgram, solve


@dataclass
class ExpansionPlan:
    increments: np.ndarray  # MW per candidate line
    candidates: list  # line indices
    operational_cost: float  # annualised bid payment, $/yr
    expansion_cost: float  # $/yr
    dispatch: np.ndarray  # (T, n_gen)

    @property
    def total_cost(self):
        return self.operational_cost + self.expansion_cost


def stage1_expansion_lp(case, fixed_bids, w_anu, horizon=None):
    """Plan continuous increments for ``case.candidates`` at fixed bids.

    Snapshots with identical load shape are merged and weighted by their
    multiplicity.  Raises :class:`ClearingInfeasible` when no expansion of
    the candidate lines can serve the load.
    """
    bids = np.asarray(fixed_bids, dtype=float)
    if bids.shape != (case.n_gen,) or np.any(bids <= 0):
        raise ValueError(f"need {case.n_gen} positive bids")
    T = case.horizon if horizon is None else horizon
    shape = np.asarray(case.demand_profile.shape[:T])
    levels, weights = np.unique(shape, return_counts=True)
    S, G, L = len(levels), case.n_gen, case.n_line
    cand = case.candidates
    C = len(cand)
    ptdf = case.ptdf()
    inj = ptdf @ case.gen_bus_matrix()  # line flow per MW of each generator
    dbase = case.demand_base
    base = case.base_capacities()
    pmax = np.array([g.p_max for g in case.generators])

    nv = S * G + C
    c = np.zeros(nv)
    for s in range(S):
        c[s * G : (s + 1) * G] = w_anu * weights[s] * bids
    c[S * G :] = [case.lines[k].expansion_cost for k in cand]

    A_eq = np.zeros((S, nv))
    b_eq = np.zeros(S)
    A_ub = np.zeros((2 * S * L, nv))
    b_ub = np.zeros(2 * S * L)
    expand = np.zeros((L, C))
    for j, k in enumerate(cand):
        expand[k, j] = 1.0
    for s, lev in enumerate(levels):
        d = dbase * lev
        A_eq[s, s * G : (s + 1) * G] = 1.0
        b_eq[s] = d.sum()
        load_flow = ptdf @ d
        r = 2 * s * L
        A_ub[r : r + L, s * G : (s + 1) * G] = inj
        A_ub[r : r + L, S * G :] = -expand
        b_ub[r : r + L] = base + load_flow
        A_ub[r + L : r + 2 * L, s * G : (s + 1) * G] = -inj
        A_ub[r + L : r + 2 * L, S * G :] = -expand
        b_ub[r + L : r + 2 * L] = base - load_flow

    lower = np.zeros(nv)
    upper = np.concatenate([np.tile(pmax, S), np.full(C, np.inf)])
    sol = solve(LinearProgram(c, A_eq, b_eq, A_ub, b_ub, lower, upper))
    if sol.status == "infeasible":
        raise ClearingInfeasible("no candidate-line expansion can serve the load at every snapshot")
    if not sol.optimal:
        raise RuntimeError(f"stage-1 LP returned status {sol.status}")
    x = sol.x
    inc = x[S * G :]
    inc = np.where(inc < 1e-9, 0.0, inc)
    per_level = x[: S * G].reshape(S, G)
    index = {lev: s for s, lev in enumerate(levels)}
    dispatch = np.array([per_level[index[v]] for v in shape])
    exp_cost = float(sum(case.lines[k].expansion_cost * inc[j] for j, k in enumerate(cand)))
    return ExpansionPlan(
        increments=inc,
        candidates=list(cand),
        operational_cost=float(sol.objective - exp_cost),
        expansion_cost=exp_cost,
        dispatch=dispatch,
    )
