"""Tabular datasets encoded into [0,1]^d, and leave-one-out views of them."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

logger = logging.getLogger(__name__)

KINDS = ("continuous", "categorical", "binary")


class EncodingError(ValueError):
    pass


@dataclass(frozen=True)
class Column:
    name: str
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "continuous":
            lo, hi = float(self.params["min"]), float(self.params["max"])
            if not lo < hi:
                raise ValueError(f"column {self.name!r}: need min < max, got [{lo}, {hi}]")
        elif self.kind == "categorical":
            cats = self.params["categories"]
            if len(cats) < 2:
                raise ValueError(f"column {self.name!r}: categorical needs at least 2 categories")
        else:
            if len(self.params["labels"]) != 2:
                raise ValueError(f"column {self.name!r}: binary needs exactly 2 labels")

    @property
    def width(self) -> int:
        return 2 if self.kind == "categorical" else 1


@dataclass(frozen=True)
class FeatureSchema:
    columns: tuple[Column, ...]
    label: str
    positive: str

    @property
    def input_dim(self) -> int:
        return sum(c.width for c in self.columns)

    def feature_slices(self) -> dict[str, tuple[int, ...]]:
        """Encoded coordinate indices of every column."""
        out, pos = {}, 0
        for c in self.columns:
            out[c.name] = tuple(range(pos, pos + c.width))
            pos += c.width
        return out

    def to_dict(self) -> dict:
        return {
            "columns": [{"name": c.name, "kind": c.kind, "params": c.params} for c in self.columns],
            "label": {"name": self.label, "positive": self.positive},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        cols = tuple(Column(c["name"], c["kind"], dict(c.get("params", {}))) for c in d["columns"])
        return cls(cols, str(d["label"]["name"]), str(d["label"]["positive"]))

    @classmethod
    def load(cls, path) -> "FeatureSchema":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class EncodedDataset:
    inputs: np.ndarray
    labels: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        X = np.array(self.inputs, dtype=np.float64)
        y = np.array(self.labels, dtype=np.int64).reshape(-1)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ValueError(f"inputs {X.shape} and labels {y.shape} disagree")
        if X.size and (X.min() < 0.0 or X.max() > 1.0):
            raise ValueError("encoded inputs must lie in [0,1]")
        if not np.all(np.isin(y, (-1, 1))):
            raise ValueError("labels must be -1 or +1")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.labels.shape[0]

    def __iter__(self) -> Iterator[tuple[np.ndarray, int]]:
        for i in range(len(self)):
            yield self.inputs[i], int(self.labels[i])

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    def digest(self) -> str:
        h = hashlib.sha256(self.inputs.tobytes())
        h.update(self.labels.tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class LooView:
    """``base`` without the entry at ``omitted_index``."""

    base: EncodedDataset
    omitted_index: int

    def __post_init__(self):
        if not 0 <= self.omitted_index < len(self.base):
            raise IndexError(f"omitted index {self.omitted_index} out of range for dataset of size {len(self.base)}")

    def __len__(self):
        return len(self.base) - 1

    def __iter__(self):
        for i, entry in enumerate(self.base):
            if i != self.omitted_index:
                yield entry

    def materialize(self) -> EncodedDataset:
        keep = np.arange(len(self.base)) != self.omitted_index
        return EncodedDataset(self.base.inputs[keep], self.base.labels[keep], self.base.provenance)


def encode_categorical(i: int, m: int) -> tuple[float, float]:
    if m < 2:
        raise EncodingError(f"need at least 2 categories, got {m}")
    if not 0 <= i < m:
        raise EncodingError(f"category index {i} out of range for {m} categories")
    angle = 0.5 * math.pi * i / (m - 1)
    # clip guards cos(pi/2) ~ 6e-17 style round-off at the endpoints
    return (min(1.0, max(0.0, math.cos(angle))), min(1.0, max(0.0, math.sin(angle))))


def encode_record(record, schema: FeatureSchema) -> tuple[list[float], int]:
    """Encode a mapping (column name -> raw string/value) into features and a label."""
    features: list[float] = []
    for col in schema.columns:
        if col.name not in record:
            raise EncodingError(f"missing column {col.name!r}")
        raw = record[col.name]
        if col.kind == "continuous":
            try:
                v = float(raw)
            except (TypeError, ValueError):
                raise EncodingError(f"column {col.name!r}: non-numeric value {raw!r}") from None
            if not math.isfinite(v):
                raise EncodingError(f"column {col.name!r}: non-finite value {raw!r}")
            lo, hi = float(col.params["min"]), float(col.params["max"])
            features.append(min(1.0, max(0.0, (v - lo) / (hi - lo))))
        elif col.kind == "categorical":
            cats = [str(c) for c in col.params["categories"]]
            key = str(raw).strip()
            if key not in cats:
                raise EncodingError(f"column {col.name!r}: unknown category {raw!r}")
            features.extend(encode_categorical(cats.index(key), len(cats)))
        else:
            labels = [str(c) for c in col.params["labels"]]
            key = str(raw).strip()
            if key not in labels:
                raise EncodingError(f"column {col.name!r}: unknown value {raw!r}")
            features.append(float(labels.index(key)))
    if schema.label not in record:
        raise EncodingError(f"missing label column {schema.label!r}")
    label = 1 if str(record[schema.label]).strip() == schema.positive else -1
    return features, label


def load_csv(path, schema: FeatureSchema, strict: bool = True) -> EncodedDataset:
    path = Path(path)
    expected = {c.name for c in schema.columns} | {schema.label}
    with path.open(newline="") as fh:
        reader = csv.reader(fh, skipinitialspace=True)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EncodingError(f"{path}: empty file") from None
        if set(header) != expected or len(header) != len(expected):
            missing = sorted(expected - set(header))
            extra = sorted(set(header) - expected)
            raise EncodingError(f"{path}: header mismatch (missing {missing}, unexpected {extra})")
        X, y = [], []
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                if len(row) != len(header):
                    raise EncodingError(f"expected {len(header)} fields, got {len(row)}")
                feats, label = encode_record(dict(zip(header, row)), schema)
            except EncodingError as exc:
                if strict:
                    raise EncodingError(f"{path}: row {row_no}: {exc}") from None
                logger.warning("%s: skipping row %d: %s", path, row_no, exc)
                continue
            X.append(feats)
            y.append(label)
    if not X:
        raise EncodingError(f"{path}: no records")
    return EncodedDataset(np.array(X), np.array(y), provenance=f"{path}#{schema.digest()}")


def synth_dataset(n: int, d: int, seed: int = 0, noise: float = 0.02, margin: float = 0.2) -> EncodedDataset:
    """Linearly separable data on [0,1]^d with a fraction ``noise`` of flipped labels.

    Points closer than ``margin`` to the separating hyperplane are resampled,
    so the clean part of the data has a gap around the boundary.
    """
    if n < 2 or d < 1:
        raise ValueError("need n >= 2 and d >= 1")
    rng = np.random.default_rng(seed)
    normal = rng.normal(size=d)
    normal /= np.linalg.norm(normal)
    offset = normal @ np.full(d, 0.5)
    X = np.empty((0, d))
    while X.shape[0] < n:
        cand = rng.uniform(size=(2 * n, d))
        dist = cand @ normal - offset
        X = np.vstack([X, cand[np.abs(dist) >= margin]])
    X = X[:n]
    y = np.where(X @ normal - offset >= 0, 1, -1)
    flip = rng.uniform(size=n) < noise
    y = np.where(flip, -y, y)
    # both classes must be present
    if np.all(y == y[0]):
        y[-1] = -y[0]
    return EncodedDataset(X, y, provenance=f"synth(n={n},d={d},seed={seed},noise={noise},margin={margin})")
