"""Sparse MILP container and solution record."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

FEAS_TOL = 1e-6

SENSES = ("<=", ">=", "==")


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    BUDGET_EXCEEDED = "BudgetExceeded"
    CUTOFF = "Cutoff"


@dataclass(frozen=True)
class Constraint:
    coeffs: dict[int, float]
    sense: str
    rhs: float
    name: str = ""


@dataclass
class MilpSolution:
    status: Status
    objective: float = math.nan
    x: np.ndarray | None = None
    bound: float = math.nan
    nodes: int = 0
    pivots: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


class MilpModel:
    """Minimize ``c @ x`` subject to sparse linear rows, variable bounds and binaries."""

    def __init__(self):
        self.names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.binary: list[bool] = []
        self.constraints: list[Constraint] = []
        self.objective: dict[int, float] = {}
        self.objective_constant = 0.0

    @property
    def num_vars(self) -> int:
        return len(self.names)

    @property
    def binaries(self) -> list[int]:
        return [j for j, b in enumerate(self.binary) if b]

    def add_var(self, name: str, lb: float = 0.0, ub: float = math.inf, binary: bool = False) -> int:
        if binary:
            lb, ub = max(0.0, lb), min(1.0, ub)
        if math.isnan(lb) or math.isnan(ub):
            raise ValueError(f"variable {name!r}: NaN bound")
        self.names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.binary.append(binary)
        return len(self.names) - 1

    def add_constraint(self, coeffs: dict[int, float], sense: str, rhs: float, name: str = "") -> None:
        if sense not in SENSES:
            raise ValueError(f"unknown sense {sense!r}")
        for j, a in coeffs.items():
            if not 0 <= j < self.num_vars:
                raise ValueError(f"constraint {name!r} references undeclared variable {j}")
            if not math.isfinite(a):
                raise ValueError(f"constraint {name!r}: non-finite coefficient for {self.names[j]}")
        if not math.isfinite(rhs):
            raise ValueError(f"constraint {name!r}: non-finite right-hand side")
        self.constraints.append(Constraint({j: float(a) for j, a in coeffs.items() if a != 0.0}, sense, float(rhs), name))

    def set_objective(self, coeffs: dict[int, float], constant: float = 0.0) -> None:
        self.objective = {j: float(a) for j, a in coeffs.items()}
        self.objective_constant = float(constant)

    def cost_vector(self) -> np.ndarray:
        c = np.zeros(self.num_vars)
        for j, a in self.objective.items():
            c[j] += a
        return c

    def dense_rows(self) -> tuple[np.ndarray, list[str], np.ndarray]:
        A = np.zeros((len(self.constraints), self.num_vars))
        for i, con in enumerate(self.constraints):
            for j, a in con.coeffs.items():
                A[i, j] = a
        return A, [c.sense for c in self.constraints], np.array([c.rhs for c in self.constraints])

    def objective_value(self, x) -> float:
        return float(self.cost_vector() @ np.asarray(x)) + self.objective_constant

    def violation(self, x, integral: bool = True) -> float:
        """Largest violation of any row, bound or (optionally) integrality requirement."""
        x = np.asarray(x, dtype=np.float64)
        worst = 0.0
        lb, ub = np.array(self.lb), np.array(self.ub)
        worst = max(worst, float(np.max(lb - x, initial=0.0)), float(np.max(x - ub, initial=0.0)))
        for con in self.constraints:
            lhs = sum(a * x[j] for j, a in con.coeffs.items())
            if con.sense == "<=":
                worst = max(worst, lhs - con.rhs)
            elif con.sense == ">=":
                worst = max(worst, con.rhs - lhs)
            else:
                worst = max(worst, abs(lhs - con.rhs))
        for j in self.binaries if integral else ():
            worst = max(worst, min(abs(x[j]), abs(x[j] - 1.0)))
        return worst

    def to_lp_text(self) -> str:
        """CPLEX LP format, for cross-checking with external solvers."""

        def term_list(coeffs):
            parts = []
            for j, a in coeffs.items():
                parts.append(f"{'+' if a >= 0 else '-'} {abs(a)!r} {self.names[j]}")
            return " ".join(parts) if parts else "0 " + self.names[0]

        out = ["Minimize", f" obj: {term_list(self.objective)}", "Subject To"]
        for i, con in enumerate(self.constraints):
            op = {"<=": "<=", ">=": ">=", "==": "="}[con.sense]
            out.append(f" {con.name or f'c{i}'}: {term_list(con.coeffs)} {op} {con.rhs!r}")
        out.append("Bounds")
        for j, name in enumerate(self.names):
            lo = "-inf" if self.lb[j] == -math.inf else repr(self.lb[j])
            hi = "+inf" if self.ub[j] == math.inf else repr(self.ub[j])
            out.append(f" {lo} <= {name} <= {hi}")
        if self.binaries:
            out.append("Binaries")
            out.append(" " + " ".join(self.names[j] for j in self.binaries))
        out.append("End")
        return "\n".join(out) + "\n"

