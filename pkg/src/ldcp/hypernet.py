"""Interval hyper-networks: exact abstraction, prediction loop and bound propagation."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .mlp import MlpArchitecture, MlpNetwork
from .predint import Interval, pred_int

logger = logging.getLogger(__name__)


def _split(arch: MlpArchitecture, theta: np.ndarray):
    weights, biases, pos = [], [], 0
    for rows, cols in arch.weight_shapes:
        weights.append(theta[pos:pos + rows * cols].reshape(rows, cols))
        pos += rows * cols
        biases.append(theta[pos:pos + rows])
        pos += rows
    return weights, biases


@dataclass(frozen=True, eq=False)
class IntervalHyperNetwork:
    """One closed interval per parameter, stored as flat lower/upper vectors.

    The flat order is the one of ``MlpNetwork.flat``.
    """

    architecture: MlpArchitecture
    lower: np.ndarray
    upper: np.ndarray
    alpha: float | None = None
    num_networks: int = 1
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        lo = np.array(self.lower, dtype=np.float64).reshape(-1)
        hi = np.array(self.upper, dtype=np.float64).reshape(-1)
        n = self.architecture.num_params
        if lo.shape != (n,) or hi.shape != (n,):
            raise ValueError(f"expected {n} intervals, got {lo.shape} / {hi.shape}")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("interval bounds must be finite")
        if np.any(lo > hi):
            raise ValueError(f"parameter {int(np.argmax(lo > hi))} has lower > upper")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def point(cls, net: MlpNetwork) -> "IntervalHyperNetwork":
        theta = net.flat()
        return cls(net.architecture, theta, theta)

    @property
    def num_params(self) -> int:
        return self.architecture.num_params

    def interval(self, i: int) -> Interval:
        return Interval(float(self.lower[i]), float(self.upper[i]))

    def layers(self):
        """Per layer ``(W_lower, W_upper, b_lower, b_upper)``."""
        wl, bl = _split(self.architecture, self.lower)
        wu, bu = _split(self.architecture, self.upper)
        return list(zip(wl, wu, bl, bu))

    def is_point(self) -> bool:
        return bool(np.array_equal(self.lower, self.upper))

    def contains(self, other: "IntervalHyperNetwork") -> bool:
        _check_arch(self.architecture, other.architecture)
        return bool(np.all(self.lower <= other.lower) and np.all(other.upper <= self.upper))

    def sample(self, rng: np.random.Generator) -> MlpNetwork:
        """A concrete network with every parameter drawn uniformly from its interval."""
        return MlpNetwork.from_flat(self.architecture, rng.uniform(self.lower, self.upper))

    # -- persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        wl, bl = _split(self.architecture, self.lower)
        wu, bu = _split(self.architecture, self.upper)
        return {
            "architecture": list(self.architecture.layer_sizes),
            "weight_lower": [w.tolist() for w in wl],
            "weight_upper": [w.tolist() for w in wu],
            "bias_lower": [b.tolist() for b in bl],
            "bias_upper": [b.tolist() for b in bu],
            "alpha": self.alpha,
            "K": self.num_networks,
            "manifest": self.manifest,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IntervalHyperNetwork":
        arch = MlpArchitecture(tuple(d["architecture"]))

        def flat(ws, bs):
            return np.concatenate([np.concatenate([np.ravel(w), np.ravel(b)]) for w, b in zip(ws, bs)])

        return cls(arch, flat(d["weight_lower"], d["bias_lower"]), flat(d["weight_upper"], d["bias_upper"]),
                   alpha=d.get("alpha"), num_networks=int(d.get("K", 1)), manifest=dict(d.get("manifest", {})))

    def save(self, path, **extra) -> None:
        payload = self.to_dict()
        payload.update(extra)
        Path(path).write_text(json.dumps(payload, indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "IntervalHyperNetwork":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _check_arch(a: MlpArchitecture, b: MlpArchitecture) -> None:
    if a != b:
        raise ValueError(f"architecture mismatch: {a.layer_sizes} vs {b.layer_sizes}")


def interval_abstraction(nets: Sequence[MlpNetwork]) -> IntervalHyperNetwork:
    """The least interval hyper-network containing every given network."""
    if not nets:
        raise ValueError("need at least one network")
    arch = nets[0].architecture
    for n in nets[1:]:
        _check_arch(arch, n.architecture)
    thetas = np.stack([n.flat() for n in nets])
    return IntervalHyperNetwork(arch, thetas.min(axis=0), thetas.max(axis=0), num_networks=len(nets))


def abstracts(h: IntervalHyperNetwork, net: MlpNetwork) -> bool:
    _check_arch(h.architecture, net.architecture)
    theta = net.flat()
    return bool(np.all(h.lower <= theta) and np.all(theta <= h.upper))


def jaccard(a: Interval, b: Interval) -> float:
    return float(_jaccard_vec(np.array([a.lower]), np.array([a.upper]),
                              np.array([b.lower]), np.array([b.upper]))[0])


def _jaccard_vec(al, au, bl, bu) -> np.ndarray:
    meet = np.maximum(0.0, np.minimum(au, bu) - np.maximum(al, bl))
    join = np.maximum(au, bu) - np.minimum(al, bl)
    with np.errstate(invalid="ignore", divide="ignore"):
        j = np.where(join > 0, meet / np.where(join > 0, join, 1.0), 0.0)
    # two identical points: 0/0 counts as equal
    return np.where(join == 0, 1.0, j)


def converged_mask(prev: IntervalHyperNetwork, curr: IntervalHyperNetwork, R: float) -> np.ndarray:
    _check_arch(prev.architecture, curr.architecture)
    return 1.0 - _jaccard_vec(curr.lower, curr.upper, prev.lower, prev.upper) <= R


def stopping_condition(prev: IntervalHyperNetwork | None, curr: IntervalHyperNetwork, R: float, M: float) -> bool:
    """True iff at least ``M`` of the parameters moved by Jaccard distance at most ``R``.

    ``prev=None`` stands for the initial bottom element and never stops.
    """
    if prev is None:
        return False
    return int(converged_mask(prev, curr, R).sum()) >= M * curr.num_params


@dataclass(frozen=True)
class HyperNetConfig:
    alpha: float = 0.1
    k: int = 400
    M: float = 0.9
    R: float = 0.1
    max_networks: int | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.k < 1:
            raise ValueError("k must be positive")
        if not 0 < self.M <= 1:
            raise ValueError(f"M must lie in (0, 1], got {self.M}")
        if not 0 <= self.R < 1:
            raise ValueError(f"R must lie in [0, 1), got {self.R}")
        if self.max_networks is not None and self.max_networks < 1:
            raise ValueError("max_networks must be positive")


@dataclass
class PredictionResult:
    hypernet: IntervalHyperNetwork
    networks: list[MlpNetwork]
    entries: list[int]
    truncated: bool
    history: list[float]

    @property
    def K(self) -> int:
        return len(self.networks)


def predict_intervals(thetas: np.ndarray, alpha_prime: float) -> tuple[np.ndarray, np.ndarray]:
    """``pred_int`` over every column of a ``K x P`` parameter matrix."""
    lo = np.empty(thetas.shape[1])
    hi = np.empty(thetas.shape[1])
    for i in range(thetas.shape[1]):
        lo[i], hi[i] = pred_int(thetas[:, i], alpha_prime)
    return lo, hi


def pred_hyper_net(
    network: MlpNetwork,
    data,
    trainer: Callable[[int], MlpNetwork],
    cfg: HyperNetConfig = HyperNetConfig(),
    train_many: Callable[[list[int]], list[MlpNetwork]] | None = None,
) -> PredictionResult:
    """Predict an interval hyper-network from a sample of leave-one-out networks.

    Each round trains ``k`` networks on the dataset without a fresh random
    entry and re-predicts every parameter interval from all networks seen
    so far with ``alpha' = alpha / #params``. Rounds continue until the
    Jaccard stopping condition holds, the network cap is hit, or every
    entry has been used (the last two set ``truncated``).
    """
    n = len(data)
    if n < cfg.k:
        raise ValueError(f"dataset has {n} entries, fewer than k={cfg.k}")
    arch = network.architecture
    cap = cfg.max_networks if cfg.max_networks is not None else n + 1
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(n)
    alpha_prime = cfg.alpha / arch.num_params
    if train_many is None:
        def train_many(js):
            return [trainer(j) for j in js]

    nets = [network]
    entries: list[int] = []
    prev = None
    curr = IntervalHyperNetwork.point(network)
    history: list[float] = []
    truncated = False
    while not stopping_condition(prev, curr, cfg.R, cfg.M):
        budget = min(cfg.k, cap - len(nets), n - len(entries))
        if budget <= 0:
            truncated = True
            break
        prev = curr
        batch = [int(j) for j in order[len(entries):len(entries) + budget]]
        nets.extend(train_many(batch))
        entries.extend(batch)
        thetas = np.stack([m.flat() for m in nets])
        lo, hi = predict_intervals(thetas, alpha_prime)
        curr = IntervalHyperNetwork(arch, lo, hi, alpha=cfg.alpha, num_networks=len(nets),
                                    manifest={"seed": cfg.seed, "entry_indices": list(entries)})
        frac = float(converged_mask(prev, curr, cfg.R).mean())
        history.append(frac)
        logger.info("round %d: K=%d converged fraction %.3f", len(history), len(nets), frac)
    return PredictionResult(curr, nets, entries, truncated, history)


# -- interval bound propagation ---------------------------------------------

@dataclass(frozen=True)
class NeuronBounds:
    """Pre-activation bounds per layer, the last entry being the output neuron."""

    lower: tuple[np.ndarray, ...]
    upper: tuple[np.ndarray, ...]

    def output(self) -> Interval:
        return Interval(float(self.lower[-1][0]), float(self.upper[-1][0]))


def _interval_matvec(wl, wu, xl, xu):
    # min/max of w*x over the four corner products, summed per row
    prods = np.stack([wl * xl, wl * xu, wu * xl, wu * xu])
    return prods.min(axis=0).sum(axis=1), prods.max(axis=0).sum(axis=1)


def interval_bounds(h: IntervalHyperNetwork, box_lower, box_upper) -> NeuronBounds:
    """Interval arithmetic over an arbitrary (possibly negative) input box."""
    xl = np.asarray(box_lower, dtype=np.float64)
    xu = np.asarray(box_upper, dtype=np.float64)
    d = h.architecture.input_dim
    if xl.shape != (d,) or xu.shape != (d,):
        raise ValueError(f"input box must have dimension {d}")
    if np.any(xl > xu):
        raise ValueError("input box has lower > upper")
    lows, highs = [], []
    layers = h.layers()
    for m, (wl, wu, bl, bu) in enumerate(layers, start=1):
        lo, hi = _interval_matvec(wl, wu, xl, xu)
        lo, hi = lo + bl, hi + bu
        lows.append(lo)
        highs.append(hi)
        if m < len(layers):
            xl, xu = np.maximum(lo, 0.0), np.maximum(hi, 0.0)
    return NeuronBounds(tuple(lows), tuple(highs))


def propagate_bounds(h: IntervalHyperNetwork, box_lower, box_upper) -> NeuronBounds:
    """Sound pre-activation bounds for every network in ``h`` and every input in the box.

    The box must lie in [0,1]^d.
    """
    xl = np.asarray(box_lower, dtype=np.float64)
    xu = np.asarray(box_upper, dtype=np.float64)
    if np.any(xl < 0.0) or np.any(xu > 1.0):
        raise ValueError("input box must lie within [0,1]^d")
    return interval_bounds(h, xl, xu)
