"""Open-set metrics, repeat aggregation and report serialization."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .openset import UNKNOWN

METRICS = ("auroc", "closed_acc", "open_acc")


class ProtocolError(ValueError):
    """An evaluation was requested on data that cannot support it."""


def auroc(known_scores, unknown_scores) -> float:
    """Probability that a known sample outscores an unknown one (ties count 1/2).

    Computed exactly from the Mann-Whitney rank-sum with averaged tie ranks.
    """
    k = np.asarray(known_scores, dtype=np.float64).ravel()
    u = np.asarray(unknown_scores, dtype=np.float64).ravel()
    if k.size == 0 or u.size == 0:
        raise ProtocolError(
            f"AUROC needs both known and unknown scores (got {k.size} and {u.size})"
        )
    ranks = rankdata(np.concatenate([k, u]), method="average")
    # rank sums are half-integers, so this stays exact for any realistic size
    u_stat = ranks[: k.size].sum() - k.size * (k.size + 1) / 2.0
    return float(u_stat / (k.size * u.size))


def closed_accuracy(predictions, labels) -> float:
    p = np.asarray(predictions)
    y = np.asarray(labels)
    if p.shape != y.shape:
        raise ValueError(f"prediction/label length mismatch: {p.shape} vs {y.shape}")
    if y.size == 0:
        raise ProtocolError("closed-set accuracy of an empty set")
    return float(np.mean(p == y))


def open_accuracy(decisions, labels) -> float:
    """(N_k + 1)-way accuracy where every unknown sample carries ``UNKNOWN``.

    ``decisions`` may be :class:`~cbcosr.openset.Decision` objects or plain
    predicted labels.
    """
    d = np.asarray([getattr(x, "predicted_class", x) for x in decisions], dtype=np.int64)
    y = np.asarray(labels, dtype=np.int64)
    if d.shape != y.shape:
        raise ValueError(f"decision/label length mismatch: {d.shape} vs {y.shape}")
    if y.size == 0:
        raise ProtocolError("open-set accuracy of an empty set")
    return float(np.mean(d == y))


@dataclass
class EvalReport:
    method: str
    auroc: float | None
    closed_acc: float
    open_acc: float | None
    split_seed: int
    run_seed: int
    n_known_test: int
    n_unknown_test: int
    threshold: float | None = None
    init_seed: int | None = None
    note: str | None = None

    def to_dict(self) -> dict:
        # field order is part of the on-disk format
        return {
            "method": self.method,
            "auroc": self.auroc,
            "closed_acc": self.closed_acc,
            "open_acc": self.open_acc,
            "split_seed": self.split_seed,
            "run_seed": self.run_seed,
            "init_seed": self.init_seed,
            "threshold": self.threshold,
            "n_known_test": self.n_known_test,
            "n_unknown_test": self.n_unknown_test,
            "note": self.note,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(**{k: d.get(k) for k in cls.__dataclass_fields__})


@dataclass
class MethodSummary:
    method: str
    n_runs: int
    mean: dict[str, float | None]
    std: dict[str, float | None]

    def to_dict(self) -> dict:
        out = {"method": self.method, "n_runs": self.n_runs}
        for m in METRICS:
            out[f"{m}_mean"] = self.mean[m]
            out[f"{m}_std"] = self.std[m]
        return out


@dataclass
class AggregateReport:
    runs: list[EvalReport]
    summaries: list[MethodSummary] = field(default_factory=list)

    def summary(self, method: str) -> MethodSummary:
        for s in self.summaries:
            if s.method == method:
                return s
        raise KeyError(method)

    def to_dict(self) -> dict:
        return {
            "runs": [r.to_dict() for r in self.runs],
            "aggregate": [s.to_dict() for s in self.summaries],
        }


def mean_std(values) -> tuple[float, float]:
    """Mean and sample standard deviation (zero for a single value)."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ProtocolError("cannot aggregate zero values")
    std = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
    return float(np.mean(v)), std


def aggregate(runs: list[EvalReport]) -> AggregateReport:
    if not runs:
        raise ProtocolError("aggregate needs at least one run")
    methods = list(dict.fromkeys(r.method for r in runs))
    summaries = []
    for method in methods:
        mine = [r for r in runs if r.method == method]
        mean, std = {}, {}
        for metric in METRICS:
            vals = [getattr(r, metric) for r in mine if getattr(r, metric) is not None]
            if vals:
                mean[metric], std[metric] = mean_std(vals)
            else:
                mean[metric] = std[metric] = None
        summaries.append(MethodSummary(method, len(mine), mean, std))
    return AggregateReport(list(runs), summaries)


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def write_report(report: AggregateReport | list[EvalReport], path) -> None:
    if isinstance(report, AggregateReport):
        doc = report.to_dict()
    else:
        doc = {"runs": [r.to_dict() for r in report]}
    Path(path).write_text(dumps(doc))


def read_report(path) -> AggregateReport:
    doc = json.loads(Path(path).read_text())
    runs = [EvalReport.from_dict(d) for d in doc["runs"]]
    return aggregate(runs) if runs else AggregateReport([])


def pct(x: float | None) -> str:
    return "-" if x is None else f"{100.0 * x:.2f}"


def format_table(report: AggregateReport) -> str:
    """Percent table with two decimals, one row per method."""
    lines = [f"{'method':<8}{'AUROC':>18}{'closed acc':>18}{'open acc':>18}"]
    for s in report.summaries:
        cells = [f"{pct(s.mean[m])} +/- {pct(s.std[m])}" for m in METRICS]
        lines.append(f"{s.method:<8}" + "".join(f"{c:>18}" for c in cells))
    return "\n".join(lines)
