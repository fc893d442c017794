import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cbcosr import evaluation as E
from cbcosr.openset import UNKNOWN, Decision

from oracles import brute_auroc


def test_auroc_examples():
    assert E.auroc([0.9, 0.8], [0.1, 0.2]) == 1.0
    assert E.auroc([0.5], [0.5]) == 0.5
    assert E.auroc([0.9, 0.4], [0.6, 0.1]) == 0.75


def test_auroc_requires_both_sides():
    with pytest.raises(E.ProtocolError):
        E.auroc([], [0.1])
    with pytest.raises(E.ProtocolError):
        E.auroc([0.1], [])


scores = st.lists(st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0]) | st.floats(-5, 5), min_size=1, max_size=30)


@given(scores, scores)
def test_auroc_matches_pair_counting(a, b):
    assert abs(E.auroc(a, b) - brute_auroc(a, b)) < 1e-12
    assert abs(E.auroc(a, b) + E.auroc(b, a) - 1.0) < 1e-12


# a coarse grid keeps the transforms strictly increasing after float rounding
grid = st.lists(st.integers(-320, 320).map(lambda i: i / 64), min_size=1, max_size=30)


@given(grid, grid)
def test_auroc_invariant_to_increasing_transform(a, b):
    for f in (lambda v: np.exp(np.asarray(v)) * 3 + 1, lambda v: np.tanh(np.asarray(v) / 8)):
        assert E.auroc(f(a), f(b)) == E.auroc(a, b)


def test_closed_accuracy():
    assert E.closed_accuracy([1, 2, 3], [1, 2, 3]) == 1.0
    assert E.closed_accuracy([0, 0], [1, 1]) == 0.0
    assert E.closed_accuracy([0, 1, 2, 2], [0, 1, 2, 3]) == 0.75


def test_open_accuracy():
    assert E.open_accuracy([0, 1, UNKNOWN], [0, 1, UNKNOWN]) == 1.0
    # every unknown accepted: only the knowns earn credit
    assert E.open_accuracy([0, 1, 2, 0, 1], [0, 1, 2, UNKNOWN, UNKNOWN]) == 3 / 5
    decisions = [Decision(0, 0.95, "cbc"), Decision(2, 0.95, "cbc"),
                 Decision(UNKNOWN, 0.1, "cbc"), Decision(1, 0.97, "cbc")]
    assert E.open_accuracy(decisions, [0, 1, UNKNOWN, UNKNOWN]) == 0.5
    with pytest.raises(E.ProtocolError):
        E.open_accuracy([], [])


def test_open_equals_closed_without_unknowns(rng):
    y = rng.integers(0, 4, 50)
    pred = np.where(rng.uniform(size=50) < 0.8, y, (y + 1) % 4)
    assert E.open_accuracy(pred, y) == E.closed_accuracy(pred, y)


def _report(method, auroc, seed=0):
    return E.EvalReport(method, auroc, 1.0, 0.5, split_seed=0, run_seed=seed,
                        n_known_test=10, n_unknown_test=5)


def test_aggregate():
    agg = E.aggregate([_report("cbc", 0.9)])
    assert agg.summary("cbc").mean["auroc"] == 0.9 and agg.summary("cbc").std["auroc"] == 0.0

    agg = E.aggregate([_report("cbc", v, i) for i, v in enumerate((0.90, 0.94, 0.92))])
    s = agg.summary("cbc")
    assert s.mean["auroc"] == pytest.approx(0.92) and s.std["auroc"] == pytest.approx(0.02)
    assert 0.90 <= s.mean["auroc"] <= 0.94
    with pytest.raises(E.ProtocolError):
        E.aggregate([])


def test_aggregate_skips_missing_metric():
    agg = E.aggregate([_report("msp", None), _report("msp", 0.8, 1)])
    assert agg.summary("msp").mean["auroc"] == 0.8
    assert E.aggregate([_report("mls", None)]).summary("mls").mean["auroc"] is None


def test_report_field_order_and_round_trip(tmp_path):
    agg = E.aggregate([_report("cbc", 0.9), _report("msp", 0.8)])
    E.write_report(agg, tmp_path / "r.json")
    doc = json.loads((tmp_path / "r.json").read_text())
    assert list(doc["runs"][0])[:6] == ["method", "auroc", "closed_acc", "open_acc",
                                        "split_seed", "run_seed"]
    back = E.read_report(tmp_path / "r.json")
    assert [r.to_dict() for r in back.runs] == [r.to_dict() for r in agg.runs]


def test_table_uses_two_decimal_percentages():
    table = E.format_table(E.aggregate([_report("cbc", 0.94891)]))
    assert "94.89 +/- 0.00" in table
