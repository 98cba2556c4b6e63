"""DC-OPF market clearing with nodal prices from the balance-row duals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lp import LinearProgram, solve

DEFAULT_SHED_PENALTY = 10_000.0


class ClearingInfeasible(Exception):
    """Demand cannot be served within line and generator limits."""


@dataclass
class ClearingInput:
    bids: np.ndarray
    demands: np.ndarray
    capacities: np.ndarray
    shed_penalty: float | None = None  # None disables load shedding

    def __post_init__(self):
        self.bids = np.asarray(self.bids, dtype=float)
        self.demands = np.asarray(self.demands, dtype=float)
        self.capacities = np.asarray(self.capacities, dtype=float)
        if np.any(self.bids <= 0):
            raise ValueError("bids must be positive")
        if np.any(self.demands < 0):
            raise ValueError("demands must be nonnegative")
        if np.any(self.capacities < 0):
            raise ValueError("line capacities must be nonnegative")


@dataclass
class ClearingResult:
    dispatch: np.ndarray
    angles: np.ndarray
    flows: np.ndarray
    lmp: np.ndarray
    gen_price: np.ndarray
    operational_cost: float
    shed: np.ndarray
    objective: float

    @property
    def shed_total(self):
        return float(self.shed.sum())


@dataclass
class LpLayout:
    n_gen: int
    angle_buses: list
    shed: bool

    @property
    def n_angle(self):
        return len(self.angle_buses)

    def split(self, x):
        g = self.n_gen
        a = g + self.n_angle
        return x[:g], x[g:a], (x[a:] if self.shed else None)


def _check_dims(case, inp):
    if inp.bids.shape != (case.n_gen,):
        raise ValueError(f"expected {case.n_gen} bids, got {inp.bids.shape}")
    if inp.demands.shape != (case.n_bus,):
        raise ValueError(f"expected {case.n_bus} bus demands, got {inp.demands.shape}")
    if inp.capacities.shape != (case.n_line,):
        raise ValueError(f"expected {case.n_line} line capacities, got {inp.capacities.shape}")


def build_lp(case, inp):
    """Bid-cost minimising DC-OPF over (P, theta without slack, shed)."""
    _check_dims(case, inp)
    nb, ng = case.n_bus, case.n_gen
    angle_buses = [n for n in range(nb) if n != case.slack_bus]
    shed = inp.shed_penalty is not None
    A = case.incidence()
    fc = case.flow_coefficients()
    flow_map = (fc[:, None] * A.T)[:, angle_buses]  # line flows from angles
    bbus = A @ flow_map  # net outflow at each bus

    blocks = [case.gen_bus_matrix(), -bbus]
    c = [inp.bids, np.zeros(len(angle_buses))]
    lower = [np.zeros(ng), np.full(len(angle_buses), -np.inf)]
    upper = [np.array([g.p_max for g in case.generators]), np.full(len(angle_buses), np.inf)]
    if shed:
        blocks.append(np.eye(nb))
        c.append(np.full(nb, float(inp.shed_penalty)))
        lower.append(np.zeros(nb))
        upper.append(inp.demands.copy())
    A_eq = np.hstack(blocks)
    nv = A_eq.shape[1]
    F = np.zeros((case.n_line, nv))
    F[:, ng : ng + len(angle_buses)] = flow_map
    lp = LinearProgram(
        c=np.concatenate(c),
        A_eq=A_eq,
        b_eq=inp.demands,
        A_ub=np.vstack([F, -F]),
        b_ub=np.concatenate([inp.capacities, inp.capacities]),
        lower=np.concatenate(lower),
        upper=np.concatenate(upper),
    )
    return lp, LpLayout(ng, angle_buses, shed)


def clear_market(case, inp):
    """Solve the DC-OPF and price every bus at its balance-row dual."""
    lp, layout = build_lp(case, inp)
    sol = solve(lp)
    if sol.status == "infeasible":
        raise ClearingInfeasible("demand cannot be met within line and generator limits")
    if not sol.optimal:
        raise RuntimeError(f"market clearing LP returned status {sol.status}")
    p, theta_free, shed = layout.split(sol.x)
    theta = np.zeros(case.n_bus)
    theta[layout.angle_buses] = theta_free
    flows = case.flow_coefficients() * (case.incidence().T @ theta)
    lmp = sol.duals_eq.copy()
    gen_price = lmp[[g.bus for g in case.generators]]
    return ClearingResult(
        dispatch=p,
        angles=theta,
        flows=flows,
        lmp=lmp,
        gen_price=gen_price,
        operational_cost=float(np.dot(gen_price, p)),
        shed=shed if shed is not None else np.zeros(case.n_bus),
        objective=sol.objective,
    )


def operational_cost(result):
    """Total payment to generators, sum_i price_i * P_i; shed is excluded."""
    return float(np.dot(result.gen_price, result.dispatch))
