"""End-to-end SGD training of the extractor and both heads."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import diffcore as dc
from . import model as M
from .data import LabeledSet, batches
from .losses import LossWeights, total_loss

log = logging.getLogger(__name__)

OPEN_LOSSES = ("cbc", "bce", "none")


class NumericAbort(FloatingPointError):
    """Training produced a non-finite loss or gradient."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    learning_rate: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 0.0005
    batch_size: int = 32
    lambda_ent: float = 0.1
    open_loss: str = "cbc"
    use_entropy: bool = True
    run_seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if not self.weight_decay >= 0:
            raise ValueError("weight_decay must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.open_loss not in OPEN_LOSSES:
            raise ValueError(f"open_loss must be one of {OPEN_LOSSES}, got {self.open_loss!r}")
        LossWeights(self.lambda_ent)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainState:
    params: M.ModelParams
    velocity: list[np.ndarray]
    epoch: int = 0
    step: int = 0
    history: dict[str, list[float]] = field(
        default_factory=lambda: {"ce": [], "open": [], "ent": [], "total": []}
    )
    epoch_log: list[dict] = field(default_factory=list)

    @classmethod
    def fresh(cls, params: M.ModelParams) -> "TrainState":
        return cls(params, [np.zeros_like(t.data) for t in params.tensors()])


def sgd_step(state: TrainState, gradients: list[np.ndarray | None], config: TrainConfig) -> TrainState:
    """Momentum SGD with weight decay folded into the gradient.

    ``g' = g + wd * theta; v = mu * v + g'; theta -= lr * v``. A ``None``
    gradient marks a parameter that is excluded from the update entirely.
    """
    tensors = state.params.tensors()
    if len(gradients) != len(tensors):
        raise ValueError(f"expected {len(tensors)} gradients, got {len(gradients)}")
    for name, t, g in zip(state.params.names, tensors, gradients):
        if g is None:
            continue
        if g.shape != t.shape:
            raise dc.ShapeError(f"gradient for {name} has shape {g.shape}, expected {t.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericAbort(f"non-finite gradient for {name} at step {state.step}")
    for i, (t, g) in enumerate(zip(tensors, gradients)):
        if g is None:
            continue
        g = g + config.weight_decay * t.data
        state.velocity[i] = config.momentum * state.velocity[i] + g
        t.data = t.data - config.learning_rate * state.velocity[i]
    return state


def _frozen(params: M.ModelParams, config: TrainConfig) -> set[str]:
    return {"cbc.w", "cbc.b"} if config.open_loss == "none" else set()


def train_step(state: TrainState, x: np.ndarray, y: np.ndarray, config: TrainConfig) -> dict[str, float]:
    params = state.params
    weights = LossWeights(config.lambda_ent)
    with dc.Tape() as tape:
        closed, cbc = M.forward(params, x)
        loss, parts = total_loss(closed, cbc, y, weights, config.open_loss, config.use_entropy)
    if not all(np.isfinite(v) for v in parts.values()):
        raise NumericAbort(f"non-finite loss at step {state.step}: {parts}")
    params.zero_grad()
    tape.backward(loss)
    frozen = _frozen(params, config)
    grads = []
    for name, t in zip(params.names, params.tensors()):
        if name in frozen:
            grads.append(None)
        else:
            grads.append(t.grad if t.grad is not None else np.zeros_like(t.data))
    sgd_step(state, grads, config)
    state.step += 1
    for k in state.history:
        state.history[k].append(parts[k])
    return parts


def epoch_seed(run_seed: int, epoch: int) -> list[int]:
    return [run_seed, epoch]


def train(data: LabeledSet, model_config: M.ModelConfig, config: TrainConfig,
          params: M.ModelParams | None = None) -> tuple[M.ModelParams, TrainState]:
    """Train on known-class data whose labels lie in ``[0, num_known)``."""
    if data.num_classes != model_config.num_known:
        raise ValueError(
            f"data has {data.num_classes} classes but the model expects {model_config.num_known}"
        )
    if data.dim != model_config.input_dim:
        raise dc.ShapeError(f"data dim {data.dim} != input_dim {model_config.input_dim}")
    if len(data) == 0:
        raise ValueError("no training samples")
    params = params if params is not None else M.init(model_config)
    state = TrainState.fresh(params)
    for epoch in range(config.epochs):
        start = state.step
        for x, y in batches(data, config.batch_size, epoch_seed(config.run_seed, epoch)):
            train_step(state, x, y, config)
        state.epoch = epoch + 1
        row = {"epoch": state.epoch, "step": state.step}
        for k, v in state.history.items():
            row[k] = float(np.mean(v[start:]))
        state.epoch_log.append(row)
        log.debug("epoch %d: %s", state.epoch, row)
    return params, state


def loss_log_csv(state: TrainState, config: TrainConfig) -> str:
    """Per-epoch mean losses; the open-set column is named after the loss used."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "step", "ce", config.open_loss, "ent", "total"])
    for row in state.epoch_log:
        w.writerow([row["epoch"], row["step"]] + [repr(row[k]) for k in ("ce", "open", "ent", "total")])
    return buf.getvalue()
