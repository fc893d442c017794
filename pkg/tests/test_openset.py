import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cbcosr import openset as O


def test_cbc_score_examples():
    pred, s = O.cbc_score([5.0, 1.0, 1.0], [3.0, 0.0, 0.0])
    assert pred == 0 and s == pytest.approx(0.9526, abs=5e-5)
    assert O.cbc_score([2.0, 2.0, 2.0], [0.0, 1.0, 1.0])[0] == 0
    assert O.cbc_score([0.0, 4.0], [9.0, 0.0]) == (1, 0.5)


def test_msp_score_examples():
    pred, s = O.msp_score([1.0, 2.0, 3.0])
    assert pred == 2 and s == pytest.approx(0.6652, abs=5e-5)
    assert O.msp_score([0.0] * 4) == (0, 0.25)
    p2, s2 = O.msp_score(np.array([1.0, 2.0, 3.0]) + 123.0)
    assert p2 == 2 and s2 == pytest.approx(s, abs=1e-12)


def test_mls_score_examples():
    assert O.mls_score([1.0, 2.0, 3.0]) == (2, 3.0)
    assert O.mls_score([-5.0, -1.0]) == (1, -1.0)
    assert O.mls_score(np.array([1.0, 2.0, 3.0]) + 10) == (2, 13.0)


def test_single_score_rejects_batches():
    with pytest.raises(ValueError):
        O.msp_score(np.zeros((2, 3)))


def test_decide_examples():
    assert O.decide((1, 0.95), 0.9).predicted_class == 1
    d = O.decide((1, 0.50), 0.9)
    assert d.predicted_class == O.UNKNOWN and d.is_unknown
    assert O.decide((1, 0.90), 0.9).predicted_class == 1


def test_decide_batch_matches_scalar(rng):
    pred = rng.integers(0, 5, 100)
    s = rng.uniform(0, 1, 100)
    batch = O.decide_batch(pred, s, 0.5)
    assert batch.tolist() == [O.decide((p, v), 0.5).predicted_class for p, v in zip(pred, s)]


def test_batch_of_one_keeps_array_shape():
    pred, s = O.cbc_scores(np.array([[1.0, 2.0]]), np.array([[0.0, 0.0]]))
    assert pred.shape == (1,) and s.shape == (1,)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0.01, 0.99))
def test_decide_monotone(s1, s2, gamma):
    lo, hi = sorted((s1, s2))
    if not O.decide((0, lo), gamma).is_unknown:
        assert not O.decide((0, hi), gamma).is_unknown


def test_methods_share_argmax(rng):
    closed = rng.normal(0, 3, (1000, 6))
    closed[::7, 1] = closed[::7, 4]  # inject ties
    cbc = rng.normal(0, 3, (1000, 6))
    preds = [O.scores(m, closed, cbc)[0] for m in O.METHODS]
    assert np.array_equal(preds[0], preds[1]) and np.array_equal(preds[1], preds[2])


def test_quantile_threshold():
    assert O.quantile_threshold(np.arange(101.0), 0.05) == 5.0
    with pytest.raises(ValueError):
        O.quantile_threshold([])
