"""Training objectives. Every loss is averaged over the batch."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor


@dataclass(frozen=True)
class LossWeights:
    lambda_ent: float = 0.1

    def __post_init__(self):
        if not self.lambda_ent >= 0:
            raise ValueError(f"lambda_ent must be >= 0, got {self.lambda_ent}")


def _labels(labels, n_rows: int, n_classes: int) -> np.ndarray:
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if y.shape != (n_rows,):
        raise ValueError(f"expected {n_rows} labels, got {y.shape[0]}")
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes}), got range [{y.min()}, {y.max()}]")
    return y


def ce_loss(closed_logits: Tensor, labels) -> Tensor:
    """Cross-entropy of the closed-set head, via log-softmax."""
    y = _labels(labels, *closed_logits.shape)
    return -dc.mean(dc.pick(dc.log_softmax(closed_logits), y))


def entropy_loss(closed_logits: Tensor) -> Tensor:
    """Mean Shannon entropy of the closed-set softmax (labels are not used)."""
    p = dc.softmax(closed_logits)
    logp = dc.log_softmax(closed_logits)
    return -dc.mean(dc.row_sum(dc.mul(p, logp)))


def hardest_negative(cbc_logits: np.ndarray, labels) -> np.ndarray:
    """Index of the non-label head with the largest score; lowest index on ties."""
    z = np.array(cbc_logits, dtype=np.float64, copy=True)
    y = np.asarray(labels, dtype=np.int64)
    z[np.arange(len(y)), y] = -np.inf
    return np.argmax(z, axis=1)


def cbc_loss(cbc_logits: Tensor, labels) -> Tensor:
    """Positive term plus the single hardest negative, per sample.

    ``-log p[y] - min_{i != y} log(1 - p[i])`` with ``p = sigmoid(logits)``.
    Only the label head and the selected negative head get a gradient.
    """
    n, k = cbc_logits.shape
    if k < 2:
        raise ValueError("cbc_loss needs at least two binary heads")
    y = _labels(labels, n, k)
    neg = hardest_negative(cbc_logits.data, y)
    p = dc.sigmoid(cbc_logits)
    pos_term = dc.log(dc.pick(p, y))
    neg_term = dc.log(dc.one_minus(dc.pick(p, neg)))
    return -dc.mean(dc.add(pos_term, neg_term))


def bce_loss(cbc_logits: Tensor, labels) -> Tensor:
    """One-vs-rest binary cross-entropy, summed over heads, averaged over the batch."""
    n, k = cbc_logits.shape
    y = _labels(labels, n, k)
    target = np.zeros((n, k))
    target[np.arange(n), y] = 1.0
    p = dc.sigmoid(cbc_logits)
    t = Tensor(target)
    per_entry = dc.add(dc.mul(t, dc.log(p)), dc.mul(Tensor(1.0 - target), dc.log(dc.one_minus(p))))
    return -dc.mean(dc.row_sum(per_entry))


def total_loss(closed_logits: Tensor, cbc_logits: Tensor, labels,
               weights: LossWeights = LossWeights(), open_loss: str = "cbc",
               use_entropy: bool = True) -> tuple[Tensor, dict[str, float]]:
    """Combined objective and its component values.

    ``open_loss`` picks the binary-head term: ``"cbc"``, ``"bce"`` or
    ``"none"``. With ``use_entropy=False`` the entropy term is dropped
    regardless of ``weights.lambda_ent``.
    """
    if closed_logits.shape[0] != cbc_logits.shape[0]:
        raise ValueError(
            f"batch size mismatch: {closed_logits.shape[0]} vs {cbc_logits.shape[0]}"
        )
    ce = ce_loss(closed_logits, labels)
    loss = ce
    parts = {"ce": ce.item(), "open": 0.0, "ent": 0.0}
    if open_loss == "cbc":
        op = cbc_loss(cbc_logits, labels)
    elif open_loss == "bce":
        op = bce_loss(cbc_logits, labels)
    elif open_loss == "none":
        op = None
    else:
        raise ValueError(f"unknown open_loss {open_loss!r}")
    if op is not None:
        loss = dc.add(loss, op)
        parts["open"] = op.item()
    if use_entropy:
        ent = entropy_loss(closed_logits)
        parts["ent"] = ent.item()
        if weights.lambda_ent:
            loss = dc.add(loss, dc.scale(ent, weights.lambda_ent))
    parts["total"] = loss.item()
    return loss, parts
