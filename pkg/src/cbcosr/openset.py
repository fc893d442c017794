"""Open-set scores and the known/unknown decision rule.

Three scoring methods share the closed-set argmax as the predicted class:

* ``cbc``: sigmoid of the predicted class's binary head
* ``msp``: maximum softmax probability
* ``mls``: maximum raw logit

Higher scores mean "more likely known". Functions accept a single logit
vector or a batch of them (one row per sample).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore import Tensor

UNKNOWN = -1
METHODS = ("cbc", "msp", "mls")
DEFAULT_GAMMA = 0.9


@dataclass(frozen=True)
class Decision:
    predicted_class: int
    score: float
    method: str

    @property
    def is_unknown(self) -> bool:
        return self.predicted_class == UNKNOWN


def _rows(x) -> np.ndarray:
    a = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    return np.atleast_2d(a)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def cbc_scores(closed_logits, cbc_logits) -> tuple[np.ndarray, np.ndarray]:
    c, o = _rows(closed_logits), _rows(cbc_logits)
    if c.shape != o.shape:
        raise ValueError(f"closed and CBC logits differ in shape: {c.shape} vs {o.shape}")
    pred = np.argmax(c, axis=1)  # first maximum wins ties
    return pred, _sigmoid(o[np.arange(len(pred)), pred])


def msp_scores(closed_logits) -> tuple[np.ndarray, np.ndarray]:
    c = _rows(closed_logits)
    e = np.exp(c - c.max(axis=1, keepdims=True))
    p = e / e.sum(axis=1, keepdims=True)
    pred = np.argmax(c, axis=1)
    return pred, p[np.arange(len(pred)), pred]


def mls_scores(closed_logits) -> tuple[np.ndarray, np.ndarray]:
    c = _rows(closed_logits)
    pred = np.argmax(c, axis=1)
    return pred, c[np.arange(len(pred)), pred]


def scores(method: str, closed_logits, cbc_logits=None) -> tuple[np.ndarray, np.ndarray]:
    """Batch predictions and scores for ``method``, one entry per row."""
    if method == "cbc":
        if cbc_logits is None:
            raise ValueError("cbc scoring needs the binary-head logits")
        return cbc_scores(closed_logits, cbc_logits)
    if method == "msp":
        return msp_scores(closed_logits)
    if method == "mls":
        return mls_scores(closed_logits)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def _one(pair) -> tuple[int, float]:
    pred, s = pair
    if len(pred) != 1:
        raise ValueError(f"expected a single logit vector, got {len(pred)} rows")
    return int(pred[0]), float(s[0])


def cbc_score(closed_logits, cbc_logits) -> tuple[int, float]:
    return _one(cbc_scores(closed_logits, cbc_logits))


def msp_score(closed_logits) -> tuple[int, float]:
    return _one(msp_scores(closed_logits))


def mls_score(closed_logits) -> tuple[int, float]:
    return _one(mls_scores(closed_logits))


def decide(score_pair, threshold: float, method: str = "cbc") -> Decision:
    """Reject as unknown when the score is strictly below ``threshold``."""
    pred, s = score_pair
    return Decision(UNKNOWN if s < threshold else int(pred), float(s), method)


def decide_batch(pred: np.ndarray, s: np.ndarray, threshold: float) -> np.ndarray:
    """Vectorised :func:`decide`, returning labels with ``UNKNOWN`` for rejections."""
    pred = np.asarray(pred, dtype=np.int64)
    return np.where(np.asarray(s) < threshold, UNKNOWN, pred)


def quantile_threshold(known_scores, q: float = 0.05) -> float:
    """Threshold accepting roughly ``1 - q`` of the given known-class scores."""
    s = np.asarray(known_scores, dtype=np.float64)
    if s.size == 0:
        raise ValueError("cannot pick a threshold from an empty score list")
    return float(np.quantile(s, q))
