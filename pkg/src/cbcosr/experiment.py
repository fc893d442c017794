"""Repeated-split experiment protocol and the loss ablation grid.

For every split seed the classes are divided into knowns and unknowns, a
model is trained on the known training samples once per run seed, and
every requested scoring method is evaluated on the known and unknown test
samples. Results are pure functions of the configuration.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import data as D
from . import evaluation as E
from . import model as M
from . import openset as O
from .trainer import TrainConfig, train

# synthetic stand-ins for increasing sensor range: separation / spread
DIFFICULTY_TIERS = {"near": 8.0, "mid": 5.0, "far": 3.0}

ABLATION_ROWS = (
    {"cbc": False, "em": True, "open_loss": "bce", "use_entropy": True},
    {"cbc": True, "em": False, "open_loss": "cbc", "use_entropy": False},
    {"cbc": True, "em": True, "open_loss": "cbc", "use_entropy": True},
)


@dataclass
class ExperimentConfig:
    synthetic: D.SyntheticSpec | None = field(default_factory=D.SyntheticSpec)
    train_path: str | None = None
    test_path: str | None = None
    num_known: int = 5
    split_seeds: list[int] = field(default_factory=lambda: [0, 1, 2])
    run_seeds_per_split: int = 3
    run_seed: int = 0
    init_seed: int = 0
    hidden_dims: list[int] = field(default_factory=lambda: [64, 64])
    feature_dim: int = 32
    train: TrainConfig = field(default_factory=TrainConfig)
    methods: list[str] = field(default_factory=lambda: list(O.METHODS))
    gamma: float = O.DEFAULT_GAMMA
    threshold_quantile: float = 0.05
    val_fraction: float = 0.1
    test_fraction: float = 0.2
    output: str | None = None

    def __post_init__(self):
        self.split_seeds = [int(s) for s in self.split_seeds]
        self.hidden_dims = [int(h) for h in self.hidden_dims]
        self.methods = list(self.methods)
        if not self.split_seeds:
            raise ValueError("at least one split seed is required")
        if self.run_seeds_per_split < 1:
            raise ValueError("run_seeds_per_split must be >= 1")
        if not self.methods or any(m not in O.METHODS for m in self.methods):
            raise ValueError(f"methods must be a nonempty subset of {O.METHODS}")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0 <= self.threshold_quantile < 1:
            raise ValueError("threshold_quantile must lie in [0, 1)")
        if self.synthetic is None and not (self.train_path and self.test_path):
            raise ValueError("give either a synthetic spec or both train_path and test_path")
        if self.num_known < 2:
            raise ValueError("num_known must be >= 2")

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "synthetic":
                v = None if v is None else {k.name: getattr(v, k.name) for k in fields(v)}
            elif f.name == "train":
                v = v.to_dict()
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        d = dict(d)
        if "synthetic" in d:
            d["synthetic"] = None if d["synthetic"] is None else D.SyntheticSpec(**d["synthetic"])
        if "train" in d:
            d["train"] = TrainConfig(**d["train"])
        return cls(**d)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def load_dataset(cfg: ExperimentConfig) -> tuple[D.LabeledSet, D.LabeledSet]:
    """Train/test sets with original class ids."""
    if cfg.synthetic is not None:
        full = D.generate_synthetic(cfg.synthetic)
        return D.stratified_split(full, cfg.test_fraction, cfg.synthetic.seed)
    tr = D.load_features(cfg.train_path)
    te = D.load_features(cfg.test_path)
    k = max(tr.num_classes, te.num_classes)
    if tr.dim != te.dim:
        raise D.FeatureFileError(f"train has {tr.dim} features but test has {te.dim}")
    return D.LabeledSet(tr.features, tr.labels, k), D.LabeledSet(te.features, te.labels, k)


@dataclass
class SplitData:
    split: D.SplitSpec
    fit: D.LabeledSet
    val: D.LabeledSet | None
    test_known: D.LabeledSet
    test_unknown: D.LabeledSet


def prepare_split(train_set: D.LabeledSet, test_set: D.LabeledSet, split: D.SplitSpec,
                  val_fraction: float) -> SplitData:
    known_train, _ = D.apply_split(train_set, split)
    if val_fraction > 0:
        fit, val = D.stratified_split(known_train, val_fraction, split.seed)
    else:
        fit, val = known_train, None
    test_known, test_unknown = D.apply_split(test_set, split)
    return SplitData(split, fit, val, test_known, test_unknown)


def evaluate_model(params: M.ModelParams, sd: SplitData, methods, gamma: float,
                   quantile: float, run_seed: int, init_seed: int | None = None) -> list[E.EvalReport]:
    """One report per method for a trained model on one split."""
    ck, ok = M.predict_logits(params, sd.test_known.features)
    cu, ou = M.predict_logits(params, sd.test_unknown.features)
    if sd.val is not None and len(sd.val):
        cv, ov = M.predict_logits(params, sd.val.features)
    n_k, n_u = len(sd.test_known), len(sd.test_unknown)
    labels = np.concatenate([sd.test_known.labels, np.full(n_u, O.UNKNOWN)])
    reports = []
    for method in methods:
        notes = []
        pk, sk = O.scores(method, ck, ok)
        pu, su = O.scores(method, cu, ou)
        if n_k and n_u:
            auroc = E.auroc(sk, su)
        else:
            auroc = None
            notes.append("auroc omitted: unknown test set is empty" if not n_u
                         else "auroc omitted: known test set is empty")
        closed_acc = E.closed_accuracy(pk, sd.test_known.labels)
        if method == "cbc":
            threshold = gamma
        elif sd.val is not None and len(sd.val):
            threshold = O.quantile_threshold(O.scores(method, cv, ov)[1], quantile)
        else:
            threshold = None
            notes.append("open_acc omitted: no validation set for the threshold")
        open_acc = None
        if threshold is not None:
            decisions = np.concatenate([O.decide_batch(pk, sk, threshold),
                                        O.decide_batch(pu, su, threshold)])
            open_acc = E.open_accuracy(decisions, labels)
        reports.append(E.EvalReport(
            method=method, auroc=auroc, closed_acc=closed_acc, open_acc=open_acc,
            split_seed=sd.split.seed, run_seed=run_seed, init_seed=init_seed,
            threshold=threshold, n_known_test=n_k, n_unknown_test=n_u,
            note="; ".join(notes) or None,
        ))
    return reports


def run_seeds(cfg: ExperimentConfig) -> list[tuple[int, int]]:
    """(run_seed, init_seed) pairs used within every split."""
    return [(cfg.run_seed + r, cfg.init_seed + r) for r in range(cfg.run_seeds_per_split)]


def run_protocol(cfg: ExperimentConfig, datasets=None) -> tuple[E.AggregateReport, list[D.SplitSpec]]:
    train_set, test_set = datasets if datasets is not None else load_dataset(cfg)
    runs, splits = [], []
    for split_seed in cfg.split_seeds:
        split = D.make_split(train_set.num_classes, cfg.num_known, split_seed)
        splits.append(split)
        sd = prepare_split(train_set, test_set, split, cfg.val_fraction)
        for run_seed, init_seed in run_seeds(cfg):
            mc = M.ModelConfig(train_set.dim, split.num_known, tuple(cfg.hidden_dims),
                               cfg.feature_dim, init_seed)
            params, _ = train(sd.fit, mc, replace(cfg.train, run_seed=run_seed))
            runs += evaluate_model(params, sd, cfg.methods, cfg.gamma,
                                   cfg.threshold_quantile, run_seed, init_seed)
    return E.aggregate(runs), splits


def protocol_document(cfg: ExperimentConfig, report: E.AggregateReport,
                      splits: list[D.SplitSpec]) -> dict:
    doc = {"config": cfg.to_dict(), "splits": [s.to_dict() for s in splits]}
    doc.update(report.to_dict())
    return doc


def run_ablation(cfg: ExperimentConfig, datasets=None) -> list[dict]:
    """Mean CBC-scored AUROC for the three loss configurations, same seeds throughout."""
    datasets = datasets if datasets is not None else load_dataset(cfg)
    rows = []
    for flags in ABLATION_ROWS:
        tc = replace(cfg.train, open_loss=flags["open_loss"], use_entropy=flags["use_entropy"])
        sub = replace(cfg, train=tc, methods=["cbc"])
        report, _ = run_protocol(sub, datasets)
        per_split = []
        for seed in cfg.split_seeds:
            vals = [r.auroc for r in report.runs if r.split_seed == seed and r.auroc is not None]
            per_split.append({"split_seed": seed,
                              "auroc_mean": float(np.mean(vals)) if vals else None})
        summary = report.summary("cbc")
        rows.append({**flags, "auroc_mean": summary.mean["auroc"],
                     "auroc_std": summary.std["auroc"], "per_split": per_split})
    return rows


def format_ablation(rows: list[dict]) -> str:
    lines = [f"{'CBC':<5}{'EM':<5}{'open loss':<11}{'AUROC':>18}"]
    for r in rows:
        cell = f"{E.pct(r['auroc_mean'])} +/- {E.pct(r['auroc_std'])}"
        lines.append(f"{'yes' if r['cbc'] else 'no':<5}{'yes' if r['em'] else 'no':<5}"
                     f"{r['open_loss']:<11}{cell:>18}")
    return "\n".join(lines)
