"""Dense bounded-variable primal simplex (two-phase).

Every variable is shifted/reflected to ``0 <= x' <= U`` (U may be inf);
nonbasic variables rest at either bound. Dantzig pricing is used until a
run of degenerate pivots, after which Bland's rule takes over until the
objective moves again.
"""

from __future__ import annotations

import math

import numpy as np

from .model import FEAS_TOL, MilpModel, MilpSolution, Status

PIVOT_TOL = 1e-9
COST_TOL = 1e-9
STALL_LIMIT = 30

BASIC, AT_LOWER, AT_UPPER = 0, 1, 2


class SimplexError(RuntimeError):
    pass


class _Unbounded(Exception):
    pass


class _Tableau:
    def __init__(self, T, rhs, ub, basis, eligible):
        self.T = T
        self.ub = ub
        self.basis = basis
        self.eligible = eligible
        n = T.shape[1]
        self.x = np.zeros(n)
        self.x[basis] = rhs
        self.status = np.full(n, AT_LOWER, dtype=np.int8)
        self.status[basis] = BASIC
        self.pivots = 0

    def run(self, cost: np.ndarray, max_iter: int) -> None:
        T, x, ub, status = self.T, self.x, self.ub, self.status
        degenerate = 0
        for _ in range(max_iter):
            d = cost - cost[self.basis] @ T
            improving = self.eligible & (
                ((status == AT_LOWER) & (d < -COST_TOL)) | ((status == AT_UPPER) & (d > COST_TOL))
            )
            cand = np.flatnonzero(improving)
            if cand.size == 0:
                return
            bland = degenerate >= STALL_LIMIT
            j = int(cand[0]) if bland else int(cand[np.argmax(np.abs(d[cand]))])
            sgn = 1.0 if status[j] == AT_LOWER else -1.0
            alpha = sgn * T[:, j]
            xb = x[self.basis]
            ubb = ub[self.basis]

            step = ub[j]
            row = -1
            dec = alpha > PIVOT_TOL
            inc = (alpha < -PIVOT_TOL) & np.isfinite(ubb)
            ratios = np.full(alpha.shape, math.inf)
            ratios[dec] = np.maximum(xb[dec], 0.0) / alpha[dec]
            ratios[inc] = np.maximum(ubb[inc] - xb[inc], 0.0) / -alpha[inc]
            if ratios.size:
                best = ratios.min()
                if best < step:
                    ties = np.flatnonzero(ratios <= best + 1e-12)
                    if bland:
                        row = int(ties[np.argmin(self.basis[ties])])
                    else:
                        row = int(ties[np.argmax(np.abs(alpha[ties]))])
                    step = ratios[row]
            if step == math.inf:
                raise _Unbounded()

            degenerate = degenerate + 1 if step <= 1e-12 else 0
            x[self.basis] = xb - step * alpha
            x[j] += sgn * step
            if row < 0:
                status[j] = AT_UPPER if sgn > 0 else AT_LOWER
                x[j] = ub[j] if sgn > 0 else 0.0
                continue

            leaving = self.basis[row]
            if alpha[row] > 0:
                status[leaving], x[leaving] = AT_LOWER, 0.0
            else:
                status[leaving], x[leaving] = AT_UPPER, ub[leaving]
            self._pivot(row, j)
            status[j] = BASIC
        raise SimplexError(f"iteration limit {max_iter} reached after {self.pivots} pivots")

    def _pivot(self, row: int, col: int) -> None:
        T = self.T
        piv = T[row, col]
        if abs(piv) < PIVOT_TOL:
            raise SimplexError(f"pivot element {piv:.3e} too small at row {row}, column {col}")
        T[row] /= piv
        colv = T[:, col].copy()
        colv[row] = 0.0
        T -= np.outer(colv, T[row])
        self.basis[row] = col
        self.pivots += 1


def _standardize(model: MilpModel, lb, ub):
    """Map ``x`` to non-negative ``x'`` with ``x = shift + S @ x'``."""
    n = model.num_vars
    cols, shift, upper = [], np.zeros(n), []
    for j in range(n):
        lo, hi = lb[j], ub[j]
        if lo > hi:
            return None
        if math.isfinite(lo):
            shift[j] = lo
            cols.append((j, 1.0))
            upper.append(hi - lo)
        elif math.isfinite(hi):
            shift[j] = hi
            cols.append((j, -1.0))
            upper.append(math.inf)
        else:
            cols.append((j, 1.0))
            upper.append(math.inf)
            cols.append((j, -1.0))
            upper.append(math.inf)
    S = np.zeros((n, len(cols)))
    for k, (j, s) in enumerate(cols):
        S[j, k] = s
    return S, shift, np.array(upper)


def solve_lp(model: MilpModel, lb=None, ub=None, max_iter: int | None = None) -> MilpSolution:
    """Solve the continuous relaxation (binaries relaxed to [0,1]).

    ``lb``/``ub`` override the model's variable bounds, which is how
    branch-and-bound fixes binaries.
    """
    lb = np.array(model.lb if lb is None else lb, dtype=np.float64)
    ub = np.array(model.ub if ub is None else ub, dtype=np.float64)
    std = _standardize(model, lb, ub)
    if std is None:
        return MilpSolution(Status.INFEASIBLE)
    S, shift, upper = std
    A, senses, b = model.dense_rows()
    c = model.cost_vector()
    m = A.shape[0]
    if m == 0:
        A = np.zeros((0, model.num_vars))
    As = A @ S
    bs = b - A @ shift
    cs = c @ S
    nx = As.shape[1]

    slack_sign = np.array([1.0 if s == "<=" else -1.0 if s == ">=" else 0.0 for s in senses])
    has_slack = slack_sign != 0.0
    n_slack = int(has_slack.sum())
    slack_cols = np.zeros((m, n_slack))
    slack_rows = np.flatnonzero(has_slack)
    slack_cols[slack_rows, np.arange(n_slack)] = slack_sign[has_slack]

    flip = bs < 0
    As[flip] *= -1
    bs[flip] *= -1
    slack_cols[flip] *= -1

    # rows whose slack has coefficient +1 start with the slack basic
    basis = np.full(m, -1)
    for k, i in enumerate(slack_rows):
        if slack_cols[i, k] > 0:
            basis[i] = nx + k
    need_art = np.flatnonzero(basis < 0)
    n_art = need_art.size
    art_cols = np.zeros((m, n_art))
    art_cols[need_art, np.arange(n_art)] = 1.0
    basis[need_art] = nx + n_slack + np.arange(n_art)

    T = np.hstack([As, slack_cols, art_cols])
    ntot = T.shape[1]
    ub_all = np.concatenate([upper, np.full(n_slack, math.inf), np.zeros(n_art)])
    eligible = np.ones(ntot, dtype=bool)
    art_idx = np.arange(nx + n_slack, ntot)
    tab = _Tableau(T, bs.copy(), ub_all, basis, eligible)
    # phase one: artificials unbounded above, pinned to 0 afterwards
    tab.ub[art_idx] = math.inf
    limit = max_iter or 50 * (m + ntot) + 100

    if n_art:
        cost1 = np.zeros(ntot)
        cost1[art_idx] = 1.0
        try:
            tab.run(cost1, limit)
        except _Unbounded:  # pragma: no cover - phase one is bounded below by 0
            raise SimplexError("phase one reported unbounded")
        infeas = float(tab.x[art_idx].sum())
        if infeas > FEAS_TOL * max(1.0, float(np.abs(bs).max(initial=0.0))):
            return MilpSolution(Status.INFEASIBLE, pivots=tab.pivots)
        tab.ub[art_idx] = 0.0
        tab.x[art_idx] = 0.0
        tab.eligible[art_idx] = False
        tab.status[art_idx] = np.where(tab.status[art_idx] == BASIC, BASIC, AT_LOWER)
        # drive remaining artificials out of the basis where possible
        for row in range(m):
            if tab.basis[row] in art_idx:
                cand = np.flatnonzero(np.abs(T[row, :nx + n_slack]) > 1e-7)
                if cand.size:
                    j = int(cand[np.argmax(np.abs(T[row, cand]))])
                    tab._pivot(row, j)
                    tab.status[j] = BASIC
                    leaving = art_idx[np.isin(art_idx, tab.basis, invert=True)]
                    tab.status[leaving] = AT_LOWER

    cost2 = np.concatenate([cs, np.zeros(ntot - nx)])
    try:
        tab.run(cost2, limit)
    except _Unbounded:
        return MilpSolution(Status.UNBOUNDED, objective=-math.inf, pivots=tab.pivots)

    xs = tab.x[:nx].copy()
    # snap nonbasic-at-bound noise and clip basic values into their box
    xs = np.clip(xs, 0.0, upper)
    x = shift + S @ xs
    x = np.clip(x, lb, ub)
    viol = model.violation(x, integral=False)
    if viol > FEAS_TOL:
        raise SimplexError(f"solution violates constraints by {viol:.3e} after {tab.pivots} pivots")
    obj = model.objective_value(x)
    return MilpSolution(Status.OPTIMAL, objective=obj, x=x, bound=obj, pivots=tab.pivots)

