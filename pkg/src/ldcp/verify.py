"""Neighborhoods, the hyper-network LDCP check, the naive baseline and evaluation metrics."""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .hypernet import IntervalHyperNetwork, abstracts, interval_abstraction, propagate_bounds
from .milp import Status, encode_hyper_robustness, is_certified, solve_milp
from .mlp import MlpNetwork, classify
from .predint import Interval


class Kind(str, enum.Enum):
    MEMBERSHIP = "membership"
    LINF_BALL = "linf"
    SENSITIVITY = "sensitivity"


@dataclass(frozen=True, eq=False)
class Neighborhood:
    """An input region around ``center`` paired with the label every point must get.

    ``features`` lists the encoded coordinates freed by a sensitivity
    neighborhood (two coordinates for a categorical attribute).
    """

    kind: Kind
    center: np.ndarray
    label: int
    epsilon: float = 0.0
    features: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        c = np.array(self.center, dtype=np.float64).reshape(-1)
        if np.any(c < 0.0) or np.any(c > 1.0):
            raise ValueError("neighborhood center must lie in [0,1]^d")
        c.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "features", tuple(int(i) for i in self.features))
        if self.label not in (-1, 1):
            raise ValueError(f"label must be -1 or +1, got {self.label}")
        if self.kind is Kind.LINF_BALL and not self.epsilon > 0:
            raise ValueError("an L-infinity ball needs a positive epsilon")
        if self.kind is Kind.SENSITIVITY:
            if not self.features:
                raise ValueError("a sensitivity neighborhood needs at least one feature index")
            for i in self.features:
                if not 0 <= i < c.size:
                    raise IndexError(f"feature index {i} out of range for dimension {c.size}")

    @classmethod
    def membership(cls, x, label: int) -> "Neighborhood":
        return cls(Kind.MEMBERSHIP, x, label)

    @classmethod
    def linf_ball(cls, x, epsilon: float, label: int) -> "Neighborhood":
        return cls(Kind.LINF_BALL, x, label, epsilon=epsilon)

    @classmethod
    def sensitivity(cls, x, features, label: int) -> "Neighborhood":
        if isinstance(features, (int, np.integer)):
            features = (int(features),)
        return cls(Kind.SENSITIVITY, x, label, features=tuple(features))

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "center": self.center.tolist(), "label": self.label}
        if self.kind is Kind.LINF_BALL:
            d["epsilon"] = self.epsilon
        if self.kind is Kind.SENSITIVITY:
            d["features"] = list(self.features)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Neighborhood":
        return cls(Kind(d["kind"]), d["center"], int(d["label"]), float(d.get("epsilon", 0.0)),
                   tuple(d.get("features", ())))


def neighborhood_box(nbh: Neighborhood) -> tuple[np.ndarray, np.ndarray]:
    x = nbh.center
    if nbh.kind is Kind.MEMBERSHIP:
        return x.copy(), x.copy()
    if nbh.kind is Kind.LINF_BALL:
        return np.clip(x - nbh.epsilon, 0.0, 1.0), np.clip(x + nbh.epsilon, 0.0, 1.0)
    lo, hi = x.copy(), x.copy()
    idx = list(nbh.features)
    lo[idx] = 0.0
    hi[idx] = 1.0
    return lo, hi


def neighborhood_intervals(nbh: Neighborhood) -> list[Interval]:
    lo, hi = neighborhood_box(nbh)
    return [Interval(float(a), float(b)) for a, b in zip(lo, hi)]


class Decision(str, enum.Enum):
    LDCP = "Ldcp"
    NOT_LDCP = "NotLdcp"


@dataclass
class Verdict:
    decision: Decision
    objective_bound: float
    wall_time: float
    budget_exceeded: bool = False
    nodes: int = 0

    @property
    def ldcp(self) -> bool:
        return self.decision is Decision.LDCP

    def to_dict(self) -> dict:
        return {"verdict": self.decision.value, "objective_bound": self.objective_bound,
                "wall_time_ms": 1000.0 * self.wall_time, "budget_exceeded": self.budget_exceeded,
                "nodes": self.nodes}


def sphynx_verify(h: IntervalHyperNetwork, nbh: Neighborhood, node_budget: int = 10_000) -> Verdict:
    """Ldcp iff every network abstracted by ``h`` gives ``nbh.label`` on the whole neighborhood.

    Decided from the propagated output bounds when they already settle the
    sign, otherwise by the MILP. The search stops as soon as the sign of
    the optimum is known.
    """
    t0 = time.perf_counter()
    if h.architecture.input_dim != nbh.center.size:
        raise ValueError(f"hyper-network expects {h.architecture.input_dim} inputs, "
                         f"neighborhood has {nbh.center.size}")
    lo, hi = neighborhood_box(nbh)
    bounds = propagate_bounds(h, lo, hi)
    y = nbh.label
    out = bounds.output()
    signed_lo = out.lower if y == 1 else -out.upper
    signed_hi = out.upper if y == 1 else -out.lower
    if is_certified(y, signed_lo):
        return Verdict(Decision.LDCP, signed_lo, time.perf_counter() - t0)
    if not is_certified(y, signed_hi):
        # even the best case misses the label
        return Verdict(Decision.NOT_LDCP, signed_hi, time.perf_counter() - t0)

    enc = encode_hyper_robustness(h, lo, hi, y, bounds)
    # label +1 fails once an incumbent < 0 exists; label -1 once one <= 0 exists
    stop_below = 0.0 if y == 1 else math.ulp(0.0)
    sol = solve_milp(enc.model, node_budget=node_budget, stop_below=stop_below, stop_above=0.0)
    elapsed = time.perf_counter() - t0
    if sol.status is Status.BUDGET_EXCEEDED:
        return Verdict(Decision.NOT_LDCP, sol.bound, elapsed, budget_exceeded=True, nodes=sol.nodes)
    if sol.status is Status.INFEASIBLE:  # pragma: no cover - the center is always feasible
        raise RuntimeError("robustness model infeasible; neuron bounds are unsound")
    if sol.status is Status.CUTOFF and not (sol.x is not None and sol.objective < stop_below):
        # the global bound crossed zero: every point of the region is classified correctly
        value = sol.bound
    else:
        value = sol.objective
    decision = Decision.LDCP if is_certified(y, value) else Decision.NOT_LDCP
    return Verdict(decision, value, elapsed, nodes=sol.nodes)


def verify_network(net: MlpNetwork, nbh: Neighborhood, node_budget: int = 10_000) -> Verdict:
    """Local robustness of one concrete network (its point hyper-network)."""
    return sphynx_verify(IntervalHyperNetwork.point(net), nbh, node_budget)


@dataclass
class NaiveResult:
    verdict: Verdict
    per_network: list[Verdict]
    failing: list[int] = field(default_factory=list)


def naive_ldcp(network: MlpNetwork, data, trainer, nbh: Neighborhood, loo_networks=None,
               node_budget: int = 10_000) -> NaiveResult:
    """Ground truth: verify the full-data network and every leave-one-out network.

    ``per_network[0]`` belongs to ``network``; ``per_network[j + 1]`` to the
    network trained without entry ``j``. ``failing`` lists those positions.
    Pass ``loo_networks`` to reuse already trained networks.
    """
    t0 = time.perf_counter()
    if loo_networks is None:
        loo_networks = [trainer(j) for j in range(len(data))]
    nets = [network, *loo_networks]
    per = [verify_network(n, nbh, node_budget) for n in nets]
    failing = [i for i, v in enumerate(per) if not v.ldcp]
    decision = Decision.NOT_LDCP if failing else Decision.LDCP
    bound = min(v.objective_bound for v in per)
    return NaiveResult(Verdict(decision, bound, time.perf_counter() - t0), per, failing)


@dataclass
class CoverageMetrics:
    weight_abstraction_rate: float
    network_abstraction_rate: float
    miscoverage: float
    overcoverage: float
    overcoverage_excluded: int = 0

    def to_dict(self) -> dict:
        return {
            "weight_abstraction_rate": self.weight_abstraction_rate,
            "network_abstraction_rate": self.network_abstraction_rate,
            "miscoverage": self.miscoverage,
            "overcoverage": self.overcoverage,
            "overcoverage_excluded": self.overcoverage_excluded,
        }


def interval_miscoverage(pred_lo, pred_hi, opt_lo, opt_hi):
    """``|optimal \\ predicted| / |predicted|`` elementwise (0/0 counts as 0)."""
    pred_w = pred_hi - pred_lo
    meet = np.maximum(0.0, np.minimum(pred_hi, opt_hi) - np.maximum(pred_lo, opt_lo))
    missing = (opt_hi - opt_lo) - meet
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(pred_w > 0, missing / np.where(pred_w > 0, pred_w, 1.0),
                         np.where(missing > 0, np.inf, 0.0))
    return ratio


def interval_overcoverage(pred_lo, pred_hi, opt_lo, opt_hi):
    """``|predicted join optimal| / |optimal|`` elementwise; NaN for zero-width optimal."""
    join = np.maximum(pred_hi, opt_hi) - np.minimum(pred_lo, opt_lo)
    opt_w = opt_hi - opt_lo
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(opt_w > 0, join / np.where(opt_w > 0, opt_w, 1.0), np.nan)


def coverage_metrics(predicted: IntervalHyperNetwork, optimal: IntervalHyperNetwork | None,
                     all_nets: Sequence[MlpNetwork]) -> CoverageMetrics:
    if optimal is None:
        optimal = interval_abstraction(all_nets)
    if predicted.architecture != optimal.architecture:
        raise ValueError("predicted and optimal hyper-networks differ in architecture")
    pl, pu, ol, ou = predicted.lower, predicted.upper, optimal.lower, optimal.upper
    covered = (pl <= ol) & (ou <= pu)
    net_rate = 100.0 * float(np.mean([abstracts(predicted, n) for n in all_nets])) if all_nets else math.nan
    mis = interval_miscoverage(pl, pu, ol, ou)
    over = interval_overcoverage(pl, pu, ol, ou)
    valid = np.isfinite(over)
    geo = float(np.exp(np.mean(np.log(over[valid])))) if valid.any() else math.nan
    return CoverageMetrics(100.0 * float(covered.mean()), net_rate, float(np.mean(mis)), geo,
                           int((~valid).sum()))


@dataclass
class ConfusionMatrix:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else math.nan

    def to_dict(self) -> dict:
        return {"TP": self.tp, "TN": self.tn, "FP": self.fp, "FN": self.fn,
                "accuracy": self.accuracy}


def _as_bool(v) -> bool:
    if isinstance(v, Verdict):
        return v.ldcp
    if isinstance(v, Decision):
        return v is Decision.LDCP
    return bool(v)


def confusion(sphynx_verdicts, naive_verdicts) -> ConfusionMatrix:
    if len(sphynx_verdicts) != len(naive_verdicts):
        raise ValueError(f"{len(sphynx_verdicts)} Sphynx verdicts vs {len(naive_verdicts)} naive verdicts")
    cm = ConfusionMatrix()
    for s, n in zip(sphynx_verdicts, naive_verdicts):
        s, n = _as_bool(s), _as_bool(n)
        if s and n:
            cm.tp += 1
        elif not s and not n:
            cm.tn += 1
        elif s:
            cm.fp += 1
        else:
            cm.fn += 1
    return cm


def default_label(net: MlpNetwork, x) -> int:
    return classify(net, x)


def sample_neighborhoods(net: MlpNetwork, inputs, count: int, seed: int = 0, epsilon: float = 0.05,
                         features: Sequence[int] = (0,), kinds: Sequence[str] = ("membership", "linf", "sensitivity")):
    """``count`` neighborhoods around randomly drawn rows of ``inputs``.

    Kinds cycle through ``kinds``; labels are the full-data network's
    classification of each center.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    rng = np.random.default_rng(seed)
    rows = rng.choice(inputs.shape[0], size=count, replace=count > inputs.shape[0])
    out = []
    for i, r in enumerate(rows):
        x = inputs[r]
        y = classify(net, x)
        kind = Kind(kinds[i % len(kinds)])
        if kind is Kind.MEMBERSHIP:
            out.append(Neighborhood.membership(x, y))
        elif kind is Kind.LINF_BALL:
            out.append(Neighborhood.linf_ball(x, epsilon, y))
        else:
            out.append(Neighborhood.sensitivity(x, tuple(features), y))
    return out
