"""Fully-connected ReLU binary classifiers: evaluation, training and persistence."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class MlpArchitecture:
    """Layer widths ``(d, k_1, ..., k_{L-1}, 1)`` of a ReLU MLP."""

    layer_sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 3:
            raise ValueError("architecture needs an input layer, at least one hidden layer and an output layer")
        if any(s <= 0 for s in sizes):
            raise ValueError(f"layer sizes must be positive, got {sizes}")
        if sizes[-1] != 1:
            raise ValueError(f"binary classifier needs a single output neuron, got {sizes[-1]}")

    @classmethod
    def from_hidden(cls, input_dim: int, hidden: Sequence[int]) -> "MlpArchitecture":
        return cls((input_dim, *hidden, 1))

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def num_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def weight_shapes(self) -> list[tuple[int, int]]:
        s = self.layer_sizes
        return [(s[m], s[m - 1]) for m in range(1, len(s))]

    @property
    def num_params(self) -> int:
        return sum(r * c + r for r, c in self.weight_shapes)

    def __str__(self):
        hidden = self.layer_sizes[1:-1]
        if len(set(hidden)) == 1:
            return f"{len(hidden)}x{hidden[0]}"
        return "-".join(map(str, self.layer_sizes))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    learning_rate: float = 0.1
    batch_size: int = 1024
    l1_coefficient: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.l1_coefficient < 0:
            raise ValueError("l1_coefficient must be non-negative")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MlpNetwork:
    """Concrete weights ``W_m`` (shape ``k_m x k_{m-1}``) and biases ``b_m``."""

    architecture: MlpArchitecture
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    seed: int | None = None
    train_config: TrainConfig | None = field(default=None)

    def __post_init__(self):
        weights = tuple(_frozen(w) for w in self.weights)
        biases = tuple(_frozen(b).reshape(-1) for b in self.biases)
        shapes = self.architecture.weight_shapes
        if len(weights) != len(shapes) or len(biases) != len(shapes):
            raise ValueError(f"expected {len(shapes)} layers, got {len(weights)} weights and {len(biases)} biases")
        for m, (w, b, shape) in enumerate(zip(weights, biases, shapes), start=1):
            if w.shape != shape:
                raise ValueError(f"layer {m}: weight shape {w.shape} != {shape}")
            if b.shape != (shape[0],):
                raise ValueError(f"layer {m}: bias shape {b.shape} != {(shape[0],)}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {m}: non-finite parameter")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)

    # Parameters are flattened layer by layer: weights (row-major) then biases.
    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(self.weights, self.biases)])

    @classmethod
    def from_flat(cls, architecture: MlpArchitecture, theta, **kwargs) -> "MlpNetwork":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (architecture.num_params,):
            raise ValueError(f"expected {architecture.num_params} parameters, got {theta.shape}")
        weights, biases, pos = [], [], 0
        for rows, cols in architecture.weight_shapes:
            weights.append(theta[pos:pos + rows * cols].reshape(rows, cols))
            pos += rows * cols
            biases.append(theta[pos:pos + rows])
            pos += rows
        return cls(architecture, tuple(weights), tuple(biases), **kwargs)

    def with_params(self, theta) -> "MlpNetwork":
        return MlpNetwork.from_flat(self.architecture, theta, seed=self.seed, train_config=self.train_config)

    def __eq__(self, other):
        if not isinstance(other, MlpNetwork):
            return NotImplemented
        return self.architecture == other.architecture and np.array_equal(self.flat(), other.flat())

    def __hash__(self):
        return hash((self.architecture, self.flat().tobytes()))

    # -- persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "architecture": list(self.architecture.layer_sizes),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "seed": self.seed,
            "train_config": asdict(self.train_config) if self.train_config else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpNetwork":
        cfg = d.get("train_config")
        return cls(
            MlpArchitecture(tuple(d["architecture"])),
            tuple(np.array(w, dtype=np.float64).reshape(len(w), -1) for w in d["weights"]),
            tuple(d["biases"]),
            seed=d.get("seed"),
            train_config=TrainConfig(**cfg) if cfg else None,
        )

    def save(self, path, **extra) -> None:
        payload = self.to_dict()
        payload.update(extra)
        Path(path).write_text(json.dumps(payload, indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "MlpNetwork":
        return cls.from_dict(json.loads(Path(path).read_text()))


def forward_batch(net: MlpNetwork, X) -> np.ndarray:
    """Scores ``N(x)`` for every row of ``X``."""
    h = np.atleast_2d(np.asarray(X, dtype=np.float64))
    last = net.architecture.num_layers
    for m, (w, b) in enumerate(zip(net.weights, net.biases), start=1):
        if h.shape[1] != w.shape[1]:
            raise ValueError(f"layer {m}: expected input of size {w.shape[1]}, got {h.shape[1]}")
        h = h @ w.T + b
        if m < last:
            h = np.maximum(h, 0.0)
    return h[:, 0]


def forward(net: MlpNetwork, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a single input vector, got shape {x.shape}")
    return float(forward_batch(net, x[None, :])[0])


def classify(net: MlpNetwork, x) -> int:
    return 1 if forward(net, x) >= 0.0 else -1


def classify_batch(net: MlpNetwork, X) -> np.ndarray:
    return np.where(forward_batch(net, X) >= 0.0, 1, -1)


def accuracy(net: MlpNetwork, X, y) -> float:
    return float(np.mean(classify_batch(net, X) == np.asarray(y)))


def init_network(arch: MlpArchitecture, rng: np.random.Generator) -> tuple[list, list]:
    """He-uniform weights, zero biases."""
    weights, biases = [], []
    for rows, cols in arch.weight_shapes:
        limit = np.sqrt(6.0 / cols)
        weights.append(rng.uniform(-limit, limit, size=(rows, cols)))
        biases.append(np.zeros(rows))
    return weights, biases


def loss_and_grad(weights, biases, X, y, l1_coefficient: float):
    """Mean BCE on ``sigmoid(N(x))`` plus ``l1 * sum|theta|``, and its gradient.

    ``y`` holds labels in {-1, +1}; they are mapped to {0, 1}.
    """
    X = np.asarray(X, dtype=np.float64)
    targets = (np.asarray(y) > 0).astype(np.float64)
    n = X.shape[0]
    acts = [X]
    pres = []
    h = X
    last = len(weights)
    for m, (w, b) in enumerate(zip(weights, biases), start=1):
        z = h @ w.T + b
        pres.append(z)
        h = np.maximum(z, 0.0) if m < last else z
        acts.append(h)
    s = acts[-1][:, 0]
    # softplus(s) - t*s, evaluated stably
    data_loss = np.mean(np.logaddexp(0.0, s) - targets * s)
    l1 = sum(np.abs(w).sum() + np.abs(b).sum() for w, b in zip(weights, biases))
    loss = data_loss + l1_coefficient * l1

    delta = ((1.0 / (1.0 + np.exp(-s))) - targets)[:, None] / n
    gw = [None] * last
    gb = [None] * last
    for m in range(last - 1, -1, -1):
        gw[m] = delta.T @ acts[m] + l1_coefficient * np.sign(weights[m])
        gb[m] = delta.sum(axis=0) + l1_coefficient * np.sign(biases[m])
        if m > 0:
            delta = (delta @ weights[m]) * (pres[m - 1] > 0)
    return float(loss), gw, gb


def _epoch_order(rng: np.random.Generator, n_full: int, omit: int | None) -> np.ndarray:
    order = rng.permutation(n_full)
    if omit is not None:
        order = order[order != omit]
    return order


def train(arch: MlpArchitecture, data, cfg: TrainConfig = TrainConfig()) -> MlpNetwork:
    """Mini-batch SGD on BCE + L1.

    ``data`` is an ``EncodedDataset`` or a ``LooView``. Leave-one-out views
    draw the initialization and the per-epoch permutations of the *full*
    index set from the same seeded stream and drop the omitted entry, so the
    run differs from the full-data run only through that entry.
    """
    base = getattr(data, "base", data)
    omit = getattr(data, "omitted_index", None)
    X, y = base.inputs, base.labels
    n_full = X.shape[0]
    if n_full - (omit is not None) <= 0:
        raise ValueError("cannot train on an empty dataset")
    if X.shape[1] != arch.input_dim:
        raise ValueError(f"dataset has {X.shape[1]} features, architecture expects {arch.input_dim}")

    rng = np.random.default_rng(cfg.seed)
    weights, biases = init_network(arch, rng)
    lr = cfg.learning_rate
    for epoch in range(cfg.epochs):
        order = _epoch_order(rng, n_full, omit)
        for start in range(0, order.size, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, gw, gb = loss_and_grad(weights, biases, X[idx], y[idx], cfg.l1_coefficient)
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite loss in epoch {epoch}")
            for m in range(len(weights)):
                weights[m] -= lr * gw[m]
                biases[m] -= lr * gb[m]
    return MlpNetwork(arch, tuple(weights), tuple(biases), seed=cfg.seed, train_config=cfg)


class LooTrainer:
    """Deterministic trainer closed over an architecture, dataset and config.

    ``trainer(None)`` trains on the full dataset, ``trainer(j)`` on the
    dataset without entry ``j``.
    """

    def __init__(self, arch: MlpArchitecture, data, cfg: TrainConfig = TrainConfig()):
        self.arch = arch
        self.data = data
        self.cfg = cfg

    def __call__(self, omit: int | None = None) -> MlpNetwork:
        from .dataset import LooView

        view = self.data if omit is None else LooView(self.data, omit)
        return train(self.arch, view, self.cfg)

    def train_many(self, omits, workers: int = 1) -> list[MlpNetwork]:
        omits = list(omits)
        if workers <= 1 or len(omits) < 2:
            return [self(j) for j in omits]
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(self, omits))
