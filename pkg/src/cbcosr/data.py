"""Synthetic benchmarks, feature files, known/unknown splits and batching."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np


class FeatureFileError(ValueError):
    """Base class for malformed feature files."""


class HeaderError(FeatureFileError):
    pass


class RowLengthError(FeatureFileError):
    pass


class LabelError(FeatureFileError):
    pass


class ValueFormatError(FeatureFileError):
    pass


@dataclass
class LabeledSet:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError(f"features must be a matrix, got shape {self.features.shape}")
        if len(self.features) != len(self.labels):
            raise ValueError(f"{len(self.features)} rows but {len(self.labels)} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels outside [0, {self.num_classes})")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, index) -> "LabeledSet":
        return LabeledSet(self.features[index], self.labels[index], self.num_classes)


@dataclass(frozen=True)
class SplitSpec:
    known_ids: tuple[int, ...]
    unknown_ids: tuple[int, ...]
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "known_ids", tuple(int(i) for i in self.known_ids))
        object.__setattr__(self, "unknown_ids", tuple(int(i) for i in self.unknown_ids))
        if set(self.known_ids) & set(self.unknown_ids):
            raise ValueError("known and unknown class ids overlap")
        if len(self.known_ids) < 2:
            raise ValueError("a split needs at least two known classes")

    @property
    def num_known(self) -> int:
        return len(self.known_ids)

    @property
    def remap(self) -> dict[int, int]:
        """Original known id -> contiguous label, preserving id order."""
        return {cid: i for i, cid in enumerate(sorted(self.known_ids))}

    def to_dict(self) -> dict:
        return {"known_ids": list(self.known_ids), "unknown_ids": list(self.unknown_ids),
                "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "SplitSpec":
        return cls(tuple(d["known_ids"]), tuple(d["unknown_ids"]), int(d["seed"]))


@dataclass(frozen=True)
class SyntheticSpec:
    num_classes: int = 8
    dim: int = 16
    samples_per_class: int = 200
    cluster_spread: float = 1.0
    separation: float = 8.0
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.dim < 1 or self.samples_per_class < 1:
            raise ValueError("dim and samples_per_class must be positive")
        if not self.cluster_spread > 0 or not self.separation > 0:
            raise ValueError("cluster_spread and separation must be positive")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")


def cluster_means(num_classes: int, dim: int, separation: float) -> np.ndarray:
    """Deterministic class centres with every pairwise distance >= ``separation``.

    Up to ``dim`` classes sit on scaled coordinate axes (all pairwise distances
    exactly ``separation``); beyond that, scaled hypercube vertices are used.
    """
    if num_classes <= dim:
        return np.eye(num_classes, dim) * (separation / np.sqrt(2.0))
    if dim < 63 and num_classes > 2 ** dim:
        raise ValueError(f"cannot place {num_classes} separated means in {dim} dimensions")
    bits = (np.arange(num_classes)[:, None] >> np.arange(dim)[None, :]) & 1
    return bits.astype(np.float64) * separation


def generate_synthetic(spec: SyntheticSpec) -> LabeledSet:
    means = cluster_means(spec.num_classes, spec.dim, spec.separation)
    rng = np.random.default_rng(spec.seed)
    n = spec.samples_per_class
    noise = rng.standard_normal((spec.num_classes * n, spec.dim)) * spec.cluster_spread
    labels = np.repeat(np.arange(spec.num_classes), n)
    return LabeledSet(means[labels] + noise, labels, spec.num_classes)


def stratified_split(data: LabeledSet, test_fraction: float = 0.2,
                     seed: int = 0) -> tuple[LabeledSet, LabeledSet]:
    """Per-class seeded split; each class contributes ``round(n * test_fraction)`` test rows."""
    if not 0.0 <= test_fraction < 1.0:
        raise ValueError("test_fraction must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for c in np.unique(data.labels):
        idx = rng.permutation(np.flatnonzero(data.labels == c))
        n_test = int(round(len(idx) * test_fraction))
        test_idx.append(idx[:n_test])
        train_idx.append(idx[n_test:])
    tr = np.sort(np.concatenate(train_idx))
    te = np.sort(np.concatenate(test_idx))
    return data.subset(tr), data.subset(te)


def make_split(num_classes: int, num_known: int, seed: int) -> SplitSpec:
    if not 2 <= num_known < num_classes:
        raise ValueError(f"need 2 <= num_known < num_classes, got {num_known} of {num_classes}")
    perm = np.random.default_rng(seed).permutation(num_classes)
    return SplitSpec(tuple(sorted(perm[:num_known].tolist())),
                     tuple(sorted(perm[num_known:].tolist())), seed)


def apply_split(data: LabeledSet, split: SplitSpec) -> tuple[LabeledSet, LabeledSet]:
    """Partition into (knowns with labels remapped to [0, N_k), unknowns with original ids).

    Samples of classes named in neither list are dropped.
    """
    for cid in split.known_ids + split.unknown_ids:
        if not 0 <= cid < data.num_classes:
            raise ValueError(f"class id {cid} outside [0, {data.num_classes})")
    lut = np.full(data.num_classes, -1, dtype=np.int64)
    for cid, new in split.remap.items():
        lut[cid] = new
    known_mask = np.isin(data.labels, split.known_ids)
    unknown_mask = np.isin(data.labels, split.unknown_ids)
    knowns = LabeledSet(data.features[known_mask], lut[data.labels[known_mask]], split.num_known)
    unknowns = data.subset(unknown_mask)
    return knowns, unknowns


def batches(data: LabeledSet, batch_size: int,
            shuffle_seed: int | None) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """One epoch of mini-batches; the final short batch is kept.

    ``shuffle_seed=None`` keeps the stored order.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = np.arange(len(data))
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(len(data))
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        yield data.features[idx], data.labels[idx]


# ---------------------------------------------------------------------------
# CSV feature files: header "label,f0,...,f{d-1}", one sample per line
# ---------------------------------------------------------------------------

def save_features(data: LabeledSet, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label"] + [f"f{j}" for j in range(data.dim)])
        for y, row in zip(data.labels, data.features):
            # repr gives the shortest string that round-trips a float64
            w.writerow([int(y)] + [repr(float(v)) for v in row])


def load_features(path, num_classes: int | None = None) -> LabeledSet:
    """Read a feature CSV; ``num_classes`` defaults to ``max(label) + 1``."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if not header:
            raise HeaderError(f"{path}: missing header line")
        expected = ["label"] + [f"f{j}" for j in range(len(header) - 1)]
        if len(header) < 2 or header != expected:
            raise HeaderError(f"{path}: header must be 'label,f0,...,f<d-1>', got {','.join(header)!r}")
        width = len(header)
        labels, feats = [], []
        for lineno, row in enumerate(rows, start=2):
            if not row:
                continue
            if len(row) != width:
                raise RowLengthError(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
            try:
                y = int(row[0])
            except ValueError:
                raise LabelError(f"{path}:{lineno}: label {row[0]!r} is not an integer") from None
            if y < 0 or (num_classes is not None and y >= num_classes):
                raise LabelError(f"{path}:{lineno}: label {y} out of range")
            try:
                feats.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise ValueFormatError(f"{path}:{lineno}: bad number ({exc})") from None
            labels.append(y)
    d = width - 1
    features = np.array(feats, dtype=np.float64).reshape(-1, d)
    labels = np.array(labels, dtype=np.int64)
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if labels.size else 1
    return LabeledSet(features, labels, num_classes)
