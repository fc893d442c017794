"""MLP feature extractor with a closed-set head and per-class binary heads.

The closed-set head and the category-aware binary (CBC) heads both read the
same feature vector. CBC heads are stored as one ``feature_dim x num_known``
matrix plus a bias vector; column ``i`` is head ``i`` and shares no
parameters with any other column.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    num_known: int
    hidden_dims: tuple[int, ...] = (64, 64)
    feature_dim: int = 32
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1 or self.feature_dim < 1:
            raise ValueError("input_dim and feature_dim must be positive")
        if any(h < 1 for h in self.hidden_dims):
            raise ValueError(f"hidden_dims must be positive, got {self.hidden_dims}")
        if self.num_known < 2:
            raise ValueError(f"num_known must be >= 2, got {self.num_known}")
        if self.init_seed < 0:
            raise ValueError("init_seed must be nonnegative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**{**d, "hidden_dims": tuple(d.get("hidden_dims", (64, 64)))})


@dataclass
class ModelParams:
    config: ModelConfig
    extractor: list[tuple[Tensor, Tensor]]
    closed_w: Tensor
    closed_b: Tensor
    cbc_w: Tensor
    cbc_b: Tensor
    names: list[str] = field(init=False)

    def __post_init__(self):
        self.names = [n for i in range(len(self.extractor)) for n in (f"extractor.{i}.w", f"extractor.{i}.b")]
        self.names += ["closed.w", "closed.b", "cbc.w", "cbc.b"]
        for name, t in zip(self.names, self.tensors()):
            t.name = name
            t.requires_grad = True

    def tensors(self) -> list[Tensor]:
        """All parameters in a fixed order matching :attr:`names`."""
        out = [t for layer in self.extractor for t in layer]
        return out + [self.closed_w, self.closed_b, self.cbc_w, self.cbc_b]

    def cbc_head(self, i: int) -> tuple[np.ndarray, float]:
        return self.cbc_w.data[:, i], float(self.cbc_b.data[i])

    def arrays(self) -> dict[str, np.ndarray]:
        return {n: t.data for n, t in zip(self.names, self.tensors())}

    def copy(self) -> "ModelParams":
        return from_arrays(self.config, {k: v.copy() for k, v in self.arrays().items()})

    def zero_grad(self) -> None:
        for t in self.tensors():
            t.grad = None


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


def init(config: ModelConfig) -> ModelParams:
    """Glorot-uniform weights and zero biases, deterministic in ``init_seed``."""
    rng = np.random.default_rng(config.init_seed)
    dims = [config.input_dim, *config.hidden_dims, config.feature_dim]
    extractor = [
        (Tensor(_glorot(rng, i, o)), Tensor(np.zeros(o)))
        for i, o in zip(dims[:-1], dims[1:])
    ]
    k, f = config.num_known, config.feature_dim
    closed_w = Tensor(_glorot(rng, f, k))
    # each binary head is its own f -> 1 layer
    cbc_w = Tensor(np.stack([_glorot(rng, f, 1)[:, 0] for _ in range(k)], axis=1))
    return ModelParams(config, extractor, closed_w, Tensor(np.zeros(k)), cbc_w, Tensor(np.zeros(k)))


def from_arrays(config: ModelConfig, arrays: dict[str, np.ndarray]) -> ModelParams:
    n_layers = len(config.hidden_dims) + 1
    extractor = [
        (Tensor(arrays[f"extractor.{i}.w"]), Tensor(arrays[f"extractor.{i}.b"]))
        for i in range(n_layers)
    ]
    params = ModelParams(
        config, extractor,
        Tensor(arrays["closed.w"]), Tensor(arrays["closed.b"]),
        Tensor(arrays["cbc.w"]), Tensor(arrays["cbc.b"]),
    )
    _validate_shapes(params)
    return params


def _validate_shapes(params: ModelParams) -> None:
    cfg = params.config
    dims = [cfg.input_dim, *cfg.hidden_dims, cfg.feature_dim]
    expected = []
    for i, o in zip(dims[:-1], dims[1:]):
        expected += [(i, o), (o,)]
    expected += [(cfg.feature_dim, cfg.num_known), (cfg.num_known,)] * 2
    for name, t, shape in zip(params.names, params.tensors(), expected):
        if t.shape != shape:
            raise dc.ShapeError(f"parameter {name} has shape {t.shape}, expected {shape}")
        if not np.all(np.isfinite(t.data)):
            raise ValueError(f"parameter {name} contains non-finite values")


def _as_input(params: ModelParams, batch) -> Tensor:
    x = batch if isinstance(batch, Tensor) else Tensor(batch)
    if x.data.ndim != 2 or x.shape[1] != params.config.input_dim:
        raise dc.ShapeError(
            f"batch shape {x.shape} does not match input_dim {params.config.input_dim}"
        )
    return x


def extract(params: ModelParams, batch) -> Tensor:
    h = _as_input(params, batch)
    last = len(params.extractor) - 1
    for i, (w, b) in enumerate(params.extractor):
        h = dc.add_bias(dc.matmul(h, w), b)
        if i < last:
            h = dc.relu(h)
    return h


def closed_logits(params: ModelParams, z: Tensor) -> Tensor:
    return dc.add_bias(dc.matmul(z, params.closed_w), params.closed_b)


def cbc_logits(params: ModelParams, z: Tensor) -> Tensor:
    return dc.add_bias(dc.matmul(z, params.cbc_w), params.cbc_b)


def forward(params: ModelParams, batch) -> tuple[Tensor, Tensor]:
    """Closed-set and CBC logits for one batch, sharing a single feature pass."""
    z = extract(params, batch)
    return closed_logits(params, z), cbc_logits(params, z)


def predict_logits(params: ModelParams, x: np.ndarray, chunk: int = 4096) -> tuple[np.ndarray, np.ndarray]:
    """Inference-only forward pass returning plain arrays."""
    x = np.asarray(x, dtype=np.float64)
    closed, cbc = [], []
    for start in range(0, max(len(x), 1), chunk):
        c, o = forward(params, x[start:start + chunk].reshape(-1, params.config.input_dim))
        closed.append(c.data)
        cbc.append(o.data)
    return np.concatenate(closed), np.concatenate(cbc)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(params: ModelParams, path) -> None:
    """Write config and all parameter arrays to a single ``.npz`` file."""
    path = Path(path)
    payload = {"config": np.array(json.dumps(params.config.to_dict(), sort_keys=True))}
    payload.update(params.arrays())
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_checkpoint(path) -> ModelParams:
    with np.load(Path(path), allow_pickle=False) as npz:
        config = ModelConfig.from_dict(json.loads(str(npz["config"])))
        arrays = {k: npz[k] for k in npz.files if k != "config"}
    return from_arrays(config, arrays)
