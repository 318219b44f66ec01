"""Best-first branch-and-bound over binary variables."""

from __future__ import annotations

import heapq
import math

import numpy as np

from .model import FEAS_TOL, MilpModel, MilpSolution, Status
from .simplex import solve_lp

# pruning slack, kept well below FEAS_TOL so the reported optimum stays exact
PRUNE_TOL = 1e-9


def solve_milp(model: MilpModel, node_budget: int = 10_000, stop_below: float | None = None,
               stop_above: float | None = None) -> MilpSolution:
    """Exact minimum of a MILP whose integer variables are all binary.

    Nodes are explored in order of their parent's LP bound; branching picks
    the lowest-index fractional binary and explores the down branch first
    on ties. ``stop_below`` ends the search once an incumbent below it is
    found, ``stop_above`` once the global bound exceeds it; such early exits
    report status CUTOFF unless the gap happens to be closed.
    """
    binaries = model.binaries
    base_lb = np.array(model.lb, dtype=np.float64)
    base_ub = np.array(model.ub, dtype=np.float64)
    incumbent: np.ndarray | None = None
    best = math.inf
    nodes = 0
    pivots = 0
    counter = 0
    heap: list[tuple[float, int, tuple]] = [(-math.inf, counter, ())]

    def global_bound() -> float:
        return min(best, heap[0][0]) if heap else best

    while heap:
        parent_bound, _, fixings = heap[0]
        if parent_bound >= best - PRUNE_TOL:
            heapq.heappop(heap)
            continue
        if stop_above is not None and parent_bound > stop_above:
            return _partial(incumbent, best, parent_bound, nodes, pivots)
        if nodes >= node_budget:
            return MilpSolution(Status.BUDGET_EXCEEDED, objective=best, x=incumbent,
                                bound=global_bound(), nodes=nodes, pivots=pivots)
        heapq.heappop(heap)
        nodes += 1
        lb, ub = base_lb.copy(), base_ub.copy()
        for j, v in fixings:
            lb[j] = ub[j] = v
        relax = solve_lp(model, lb, ub)
        pivots += relax.pivots
        if relax.status is Status.INFEASIBLE:
            continue
        if relax.status is Status.UNBOUNDED:
            return MilpSolution(Status.UNBOUNDED, objective=-math.inf, nodes=nodes, pivots=pivots)
        if relax.objective >= best - PRUNE_TOL:
            continue
        x = relax.x
        frac = [j for j in binaries if FEAS_TOL < x[j] < 1.0 - FEAS_TOL]
        if not frac:
            x = x.copy()
            x[binaries] = np.round(x[binaries])
            incumbent, best = x, relax.objective
            if stop_below is not None and best < stop_below:
                return _partial(incumbent, best, global_bound(), nodes, pivots)
            continue
        j = frac[0]
        counter += 1
        heapq.heappush(heap, (relax.objective, counter, fixings + ((j, 0.0),)))
        counter += 1
        heapq.heappush(heap, (relax.objective, counter, fixings + ((j, 1.0),)))

    if incumbent is None:
        return MilpSolution(Status.INFEASIBLE, nodes=nodes, pivots=pivots)
    return MilpSolution(Status.OPTIMAL, objective=best, x=incumbent, bound=best, nodes=nodes, pivots=pivots)


def _partial(incumbent, best, bound, nodes, pivots) -> MilpSolution:
    """Early exit: optimal only if incumbent and bound already meet."""
    closed = incumbent is not None and best - bound <= FEAS_TOL
    return MilpSolution(Status.OPTIMAL if closed else Status.CUTOFF,
                        objective=best, x=incumbent, bound=bound, nodes=nodes, pivots=pivots)
