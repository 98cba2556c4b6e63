"""Dense two-phase simplex with primal and dual solution extraction.

Problems are stated as::

    min  c @ x
    s.t. A_eq @ x == b_eq
         A_ub @ x <= b_ub
         lower <= x <= upper        (infinite bounds allowed)

Dual sign conventions (minimisation):

* ``duals_eq[k] = d obj / d b_eq[k]`` (free sign).  For a power balance row
  whose right hand side is the bus demand this is the nodal price.
* ``duals_ub[k] = -d obj / d b_ub[k] >= 0``.
* ``bound_duals_lower``/``bound_duals_upper`` are the nonnegative multipliers
  of the active variable bounds.

With these, dual feasibility reads
``c - A_eq.T @ y_eq + A_ub.T @ y_ub - z_lower + z_upper == 0`` and the dual
objective is ``b_eq @ y_eq - b_ub @ y_ub + lower @ z_lower - upper @ z_upper``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FEAS_TOL = 1e-8
GAP_TOL = 1e-6
PIVOT_TOL = 1e-10
# consecutive degenerate pivots tolerated before switching to Bland's rule
DEGENERATE_STREAK = 8


class LpError(Exception):
    pass


class IterationLimitError(LpError):
    """Raised when the simplex exceeds its pivot budget."""


@dataclass
class LinearProgram:
    c: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A_eq, self.b_eq = _rows(self.A_eq, self.b_eq, n, "eq")
        self.A_ub, self.b_ub = _rows(self.A_ub, self.b_ub, n, "ub")
        self.lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=float).ravel()
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).ravel()
        if self.lower.size != n or self.upper.size != n:
            raise ValueError(f"bounds must have length {n}")
        for name in ("c", "A_eq", "b_eq", "A_ub", "b_ub", "lower", "upper"):
            if np.isnan(getattr(self, name)).any():
                raise ValueError(f"NaN in {name}")
        if np.isinf(self.c).any() or np.isinf(self.A_eq).any() or np.isinf(self.A_ub).any():
            raise ValueError("infinite coefficient in objective or constraint matrix")
        if np.any(self.lower == np.inf) or np.any(self.upper == -np.inf):
            raise ValueError("lower bound +inf or upper bound -inf")

    @property
    def n_vars(self):
        return self.c.size


def _rows(A, b, n, label):
    if A is None:
        if b is not None and np.size(b) > 0:
            raise ValueError(f"b_{label} given without A_{label}")
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    if A.shape[0] == 0:
        A = A.reshape(0, n)
    if A.shape != (b.size, n):
        raise ValueError(f"A_{label} has shape {A.shape}, expected ({b.size}, {n})")
    return A, b


@dataclass
class LpSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None = None
    objective: float = float("nan")
    duals_eq: np.ndarray | None = None
    duals_ub: np.ndarray | None = None
    bound_duals_lower: np.ndarray | None = None
    bound_duals_upper: np.ndarray | None = None
    dual_objective: float = float("nan")
    iterations: int = 0
    ray: np.ndarray | None = field(default=None, repr=False)

    @property
    def optimal(self):
        return self.status == "optimal"


class _Standard:
    """x = offset + T @ y with y >= 0; rows are [eq; ub; upper-bound rows]."""

    def __init__(self, lp: LinearProgram):
        n = lp.n_vars
        cols = []  # (orig var, sign)
        offset = np.zeros(n)
        bound_rows = []  # (std col, rhs)
        for j in range(n):
            lo, hi = lp.lower[j], lp.upper[j]
            if np.isfinite(lo):
                offset[j] = lo
                cols.append((j, 1.0))
                if np.isfinite(hi):
                    bound_rows.append((len(cols) - 1, hi - lo))
            elif np.isfinite(hi):
                offset[j] = hi
                cols.append((j, -1.0))
            else:
                cols.append((j, 1.0))
                cols.append((j, -1.0))
        ns = len(cols)
        T = np.zeros((n, ns))
        for k, (j, s) in enumerate(cols):
            T[j, k] = s
        self.T, self.offset, self.ns = T, offset, ns
        self.me, self.mu, self.nb = lp.A_eq.shape[0], lp.A_ub.shape[0], len(bound_rows)
        m = self.me + self.mu + self.nb
        A = np.zeros((m, ns))
        b = np.zeros(m)
        A[: self.me] = lp.A_eq @ T
        b[: self.me] = lp.b_eq - lp.A_eq @ offset
        A[self.me : self.me + self.mu] = lp.A_ub @ T
        b[self.me : self.me + self.mu] = lp.b_ub - lp.A_ub @ offset
        for r, (k, rhs) in enumerate(bound_rows):
            A[self.me + self.mu + r, k] = 1.0
            b[self.me + self.mu + r] = rhs
        # slack columns for every inequality row
        n_ineq = self.mu + self.nb
        S = np.zeros((m, n_ineq))
        S[self.me :, :] = np.eye(n_ineq)
        self.A = np.hstack([A, S])
        self.b = b
        self.c = np.concatenate([T.T @ lp.c, np.zeros(n_ineq)])
        self.c0 = float(lp.c @ offset)
        self.m = m

    def to_original(self, y):
        return self.offset + self.T @ y[: self.ns]


def solve(lp: LinearProgram, max_iter: int | None = None) -> LpSolution:
    """Solve ``lp`` with the two-phase simplex method.

    Raises :class:`IterationLimitError` when the pivot budget
    (default ``50 * (rows + cols)``) is exhausted.
    """
    std = _Standard(lp)
    m, nc = std.A.shape
    if max_iter is None:
        max_iter = 50 * (m + nc)

    sign = np.where(std.b < 0, -1.0, 1.0)
    A = std.A * sign[:, None]
    b = std.b * sign

    # initial basis: slack for nonnegated inequality rows, artificial elsewhere
    basis = np.empty(m, dtype=int)
    need_art = []
    for i in range(m):
        if i >= std.me and sign[i] > 0:
            basis[i] = std.ns + (i - std.me)
        else:
            need_art.append(i)
    n_art = len(need_art)
    tab = np.zeros((m, nc + n_art))
    tab[:, :nc] = A
    for k, i in enumerate(need_art):
        tab[i, nc + k] = 1.0
        basis[i] = nc + k
    rhs = b.copy()
    scale = max(1.0, float(np.abs(std.c).max(initial=0.0)))

    iters = 0
    if n_art:
        cost1 = np.zeros(nc + n_art)
        cost1[nc:] = 1.0
        d = cost1 - cost1[basis] @ tab
        status, iters, _ = _iterate(tab, rhs, basis, d, nc + n_art, max_iter, iters, 1.0)
        infeas = float(rhs[basis >= nc].sum())
        if infeas > FEAS_TOL * max(1.0, np.abs(b).max(initial=0.0)):
            return LpSolution("infeasible", iterations=iters)
        # drive zero-level artificials out of the basis; drop redundant rows
        keep = np.ones(m, dtype=bool)
        for i in np.flatnonzero(basis >= nc):
            cand = np.flatnonzero(np.abs(tab[i, :nc]) > 1e-9)
            if cand.size:
                _pivot(tab, rhs, None, i, cand[np.argmax(np.abs(tab[i, cand]))], basis)
            else:
                keep[i] = False
        tab, rhs, basis = tab[keep][:, :nc], rhs[keep], basis[keep]
        rows = np.flatnonzero(keep)
    else:
        rows = np.arange(m)

    d = std.c - std.c[basis] @ tab
    status, iters, ray = _iterate(tab, rhs, basis, d, nc, max_iter, iters, scale)
    if status == "unbounded":
        j, col = ray
        direction = np.zeros(nc)
        direction[j] = 1.0
        direction[basis] = -col
        return LpSolution("unbounded", iterations=iters, ray=std.T @ direction[: std.ns])

    # refine the basic solution and duals from the original columns
    B = std.A[np.ix_(rows, basis)]
    xB = np.linalg.solve(B, std.b[rows])
    y_kept = np.linalg.solve(B.T, std.c[basis])
    y_std = np.zeros(m)
    y_std[rows] = y_kept
    ystd = np.zeros(nc)
    ystd[basis] = np.maximum(xB, 0.0)
    x = std.to_original(ystd)
    x = np.minimum(np.maximum(x, lp.lower), lp.upper)

    y_eq = y_std[: std.me]
    y_ub = -y_std[std.me : std.me + std.mu]
    r = lp.c - lp.A_eq.T @ y_eq + lp.A_ub.T @ y_ub
    z_lo = np.where(np.isfinite(lp.lower), np.maximum(r, 0.0), 0.0)
    z_hi = np.where(np.isfinite(lp.upper), np.maximum(-r, 0.0), 0.0)
    dual_obj = float(
        lp.b_eq @ y_eq
        - lp.b_ub @ y_ub
        + np.where(np.isfinite(lp.lower), lp.lower, 0.0) @ z_lo
        - np.where(np.isfinite(lp.upper), lp.upper, 0.0) @ z_hi
    )
    return LpSolution(
        "optimal",
        x=x,
        objective=float(lp.c @ x),
        duals_eq=y_eq,
        duals_ub=y_ub,
        bound_duals_lower=z_lo,
        bound_duals_upper=z_hi,
        dual_objective=dual_obj,
        iterations=iters,
    )


def _pivot(tab, rhs, d, r, j, basis):
    piv = tab[r, j]
    tab[r] /= piv
    rhs[r] /= piv
    col = tab[:, j].copy()
    col[r] = 0.0
    nz = np.flatnonzero(col)
    tab[nz] -= np.outer(col[nz], tab[r])
    rhs[nz] -= col[nz] * rhs[r]
    if d is not None:
        d -= d[j] * tab[r]
    basis[r] = j


def _iterate(tab, rhs, basis, d, n_active, max_iter, iters, scale):
    """Pivot until optimal or unbounded.  Dantzig's rule, falling back to
    Bland's rule while a run of degenerate pivots is in progress."""
    opt_tol = 1e-9 * scale
    streak = 0
    while True:
        dj = d[:n_active]
        neg = np.flatnonzero(dj < -opt_tol)
        if neg.size == 0:
            return "optimal", iters, None
        if iters >= max_iter:
            raise IterationLimitError(f"simplex exceeded {max_iter} pivots")
        j = int(neg[0]) if streak >= DEGENERATE_STREAK else int(neg[np.argmin(dj[neg])])
        col = tab[:, j]
        pos = np.flatnonzero(col > PIVOT_TOL)
        if pos.size == 0:
            return "unbounded", iters, (j, col.copy())
        ratios = rhs[pos] / col[pos]
        best = ratios.min()
        ties = pos[ratios <= best + 1e-12 * max(1.0, abs(best))]
        r = int(ties[np.argmin(basis[ties])])
        streak = streak + 1 if best <= 1e-12 else 0
        _pivot(tab, rhs, d, r, j, basis)
        rhs[rhs < 0] = np.where(rhs[rhs < 0] > -1e-11, 0.0, rhs[rhs < 0])
        iters += 1


def kkt_residuals(lp: LinearProgram, sol: LpSolution) -> dict:
    """Primal/dual feasibility, complementary slackness and relative gap."""
    x = sol.x
    slack_ub = lp.b_ub - lp.A_ub @ x
    primal = max(
        np.abs(lp.A_eq @ x - lp.b_eq).max(initial=0.0),
        np.maximum(-slack_ub, 0.0).max(initial=0.0),
        np.maximum(lp.lower - x, 0.0).max(initial=0.0),
        np.maximum(x - lp.upper, 0.0).max(initial=0.0),
    )
    r = lp.c - lp.A_eq.T @ sol.duals_eq + lp.A_ub.T @ sol.duals_ub - sol.bound_duals_lower + sol.bound_duals_upper
    dual = max(
        np.abs(r).max(initial=0.0),
        np.maximum(-sol.duals_ub, 0.0).max(initial=0.0),
    )
    lo_gap = np.where(np.isfinite(lp.lower), x - lp.lower, 0.0)
    hi_gap = np.where(np.isfinite(lp.upper), lp.upper - x, 0.0)
    comp = max(
        np.abs(sol.duals_ub * slack_ub).max(initial=0.0),
        np.abs(sol.bound_duals_lower * lo_gap).max(initial=0.0),
        np.abs(sol.bound_duals_upper * hi_gap).max(initial=0.0),
    )
    gap = abs(sol.objective - sol.dual_objective) / max(1.0, abs(sol.objective))
    return {"primal": float(primal), "dual": float(dual), "complementarity": float(comp), "gap": float(gap)}
