"""MILP encodings of local robustness for concrete and interval hyper-networks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..hypernet import IntervalHyperNetwork, NeuronBounds
from ..mlp import MlpNetwork
from .model import MilpModel


@dataclass
class RobustnessEncoding:
    """A model minimizing ``label * N(x)`` plus the variable layout."""

    model: MilpModel
    label: int
    inputs: list[int]
    pre: list[list[int]]
    post: list[list[int]]
    relu_binaries: dict[tuple[int, int], int] = field(default_factory=dict)

    @property
    def output(self) -> int:
        return self.pre[-1][0]

    @property
    def num_unstable(self) -> int:
        return len(self.relu_binaries)


def is_certified(label: int, min_signed_output: float) -> bool:
    """Label +1 needs ``min N(x) >= 0``; label -1 needs ``max N(x) < 0``."""
    return min_signed_output >= 0.0 if label == 1 else min_signed_output > 0.0


def _check_bounds(bounds: NeuronBounds, sizes) -> None:
    for m, (lo, hi) in enumerate(zip(bounds.lower, bounds.upper), start=1):
        if lo.shape != (sizes[m],) or hi.shape != (sizes[m],):
            raise ValueError(f"layer {m}: neuron bounds have the wrong shape")
        for k in range(sizes[m]):
            if not (math.isfinite(lo[k]) and math.isfinite(hi[k])):
                raise ValueError(f"neuron ({m},{k}) has a non-finite bound [{lo[k]}, {hi[k]}]")
            if lo[k] > hi[k]:
                raise ValueError(f"neuron ({m},{k}) has lower bound above upper bound")


def _relu(model: MilpModel, enc: RobustnessEncoding, m: int, k: int, pre: int, lo: float, hi: float) -> int:
    name = f"x_{m}_{k}"
    if hi <= 0.0:
        return model.add_var(name, 0.0, 0.0)
    if lo >= 0.0:
        post = model.add_var(name, lo, hi)
        model.add_constraint({post: 1.0, pre: -1.0}, "==", 0.0, f"relu_active_{m}_{k}")
        return post
    post = model.add_var(name, 0.0, hi)
    a = model.add_var(f"a_{m}_{k}", 0.0, 1.0, binary=True)
    enc.relu_binaries[(m, k)] = a
    # x >= 0 is the variable bound
    model.add_constraint({post: 1.0, pre: -1.0}, ">=", 0.0, f"relu_ge_pre_{m}_{k}")
    model.add_constraint({post: 1.0, pre: -1.0, a: -lo}, "<=", -lo, f"relu_le_pre_{m}_{k}")
    model.add_constraint({post: 1.0, a: -hi}, "<=", 0.0, f"relu_le_ua_{m}_{k}")
    return post


def _encode(layers, box_lower, box_upper, label: int, bounds: NeuronBounds, sizes,
            input_lower=None, merge_point_rows: bool = True) -> RobustnessEncoding:
    """``layers`` yields ``(W_lo, W_hi, b_lo, b_hi)``.

    With ``merge_point_rows`` a neuron whose intervals are all points gets a
    single equality row instead of two coinciding inequalities.
    """
    if label not in (-1, 1):
        raise ValueError(f"label must be -1 or +1, got {label}")
    _check_bounds(bounds, sizes)
    xl = np.asarray(box_lower, dtype=np.float64)
    xu = np.asarray(box_upper, dtype=np.float64)
    model = MilpModel()
    inputs = [model.add_var(f"x_0_{j}", float(xl[j]), float(xu[j])) for j in range(sizes[0])]
    enc = RobustnessEncoding(model, label, inputs, [], [])
    prev = inputs
    # lower bound of every input to the current affine layer, for the penalty term
    prev_lower = np.asarray(xl if input_lower is None else input_lower, dtype=np.float64)
    n_layers = len(sizes) - 1
    for m, (wl, wu, bl, bu) in enumerate(layers, start=1):
        neg = np.maximum(0.0, -prev_lower)
        penalty = (wu - wl) @ neg
        pre_vars, post_vars = [], []
        for k in range(sizes[m]):
            lo, hi = float(bounds.lower[m - 1][k]), float(bounds.upper[m - 1][k])
            v = model.add_var(f"xhat_{m}_{k}", lo, hi)
            pre_vars.append(v)
            if merge_point_rows and np.array_equal(wl[k], wu[k]) and bl[k] == bu[k] and penalty[k] == 0.0:
                row = {v: 1.0}
                for j, p in enumerate(prev):
                    row[p] = row.get(p, 0.0) - wl[k, j]
                model.add_constraint(row, "==", float(bl[k]), f"affine_{m}_{k}")
            else:
                lo_row = {v: 1.0}
                hi_row = {v: 1.0}
                for j, p in enumerate(prev):
                    lo_row[p] = lo_row.get(p, 0.0) - wl[k, j]
                    hi_row[p] = hi_row.get(p, 0.0) - wu[k, j]
                model.add_constraint(lo_row, ">=", float(bl[k] - penalty[k]), f"affine_lo_{m}_{k}")
                model.add_constraint(hi_row, "<=", float(bu[k] + penalty[k]), f"affine_hi_{m}_{k}")
            if m < n_layers:
                post_vars.append(_relu(model, enc, m, k, v, lo, hi))
        enc.pre.append(pre_vars)
        if m < n_layers:
            enc.post.append(post_vars)
            prev = post_vars
            prev_lower = np.maximum(bounds.lower[m - 1], 0.0)
    model.set_objective({enc.output: float(label)})
    return enc


def encode_hyper_robustness(h: IntervalHyperNetwork, box_lower, box_upper, label: int,
                            bounds: NeuronBounds, merge_point_rows: bool = True) -> RobustnessEncoding:
    """Each affine equality becomes ``l_W x + l_b <= xhat <= u_W x + u_b``.

    Exact when every affine input is non-negative, which holds for boxes in
    [0,1]^d because ReLU outputs are non-negative.
    """
    xl = np.asarray(box_lower, dtype=np.float64)
    if np.any(xl < 0.0):
        raise ValueError("input box has negative coordinates; use encode_with_negative_lb")
    return _encode(h.layers(), box_lower, box_upper, label, bounds, h.architecture.layer_sizes,
                   merge_point_rows=merge_point_rows)


def encode_with_negative_lb(h: IntervalHyperNetwork, box_lower, box_upper, label: int,
                            bounds: NeuronBounds, input_lower=None) -> RobustnessEncoding:
    """Affine rows widened by ``(u_W - l_W) @ max(0, -l_x)`` for possibly negative inputs.

    ``input_lower`` defaults to the box's lower corner. Hidden-layer inputs
    are ReLU outputs, so the widening only affects the first layer.
    """
    return _encode(h.layers(), box_lower, box_upper, label, bounds, h.architecture.layer_sizes,
                   input_lower=box_lower if input_lower is None else input_lower)


def encode_concrete_robustness(net: MlpNetwork, box_lower, box_upper, label: int,
                               bounds: NeuronBounds) -> RobustnessEncoding:
    """Standard big-M encoding of a single network with equality affine rows."""
    layers = [(w, w, b, b) for w, b in zip(net.weights, net.biases)]
    return _encode(layers, box_lower, box_upper, label, bounds, net.architecture.layer_sizes)
