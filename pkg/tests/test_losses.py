import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbcosr import diffcore as dc
from cbcosr import losses as L
from cbcosr.diffcore import Tensor

from oracles import gradcheck, ref_bce, ref_cbc, ref_ce, ref_entropy


def T(x):
    return Tensor(np.asarray(x, dtype=float))


def test_ce_examples():
    assert L.ce_loss(T(np.zeros((1, 4))), [0]).item() == pytest.approx(math.log(4))
    assert L.ce_loss(T([[1, 2, 3]]), [2]).item() == pytest.approx(0.4076, abs=5e-5)
    losses = [L.ce_loss(T([[0.0, big]]), [1]).item() for big in (1, 10, 100, 1000)]
    assert losses == sorted(losses, reverse=True) and losses[-1] < 1e-12


def test_ce_label_range():
    with pytest.raises(ValueError):
        L.ce_loss(T(np.zeros((2, 3))), [0, 3])
    with pytest.raises(ValueError):
        L.ce_loss(T(np.zeros((2, 3))), [-1, 0])


def test_entropy_examples():
    assert L.entropy_loss(T([[0.0, 500.0, 0.0]])).item() == pytest.approx(0.0, abs=1e-12)
    assert L.entropy_loss(T(np.zeros((3, 4)))).item() == pytest.approx(math.log(4))
    logits = np.log([[0.5, 0.25, 0.25]])
    assert L.entropy_loss(T(logits)).item() == pytest.approx(1.0397, abs=5e-5)


def test_cbc_example_by_hand():
    logits = [[2.0, -1.0, 0.0]]
    assert L.hardest_negative(np.array(logits), [0]).tolist() == [2]
    assert L.cbc_loss(T(logits), [0]).item() == pytest.approx(0.8201, abs=5e-5)


def test_cbc_perfect_separation_limit():
    assert L.cbc_loss(T([[30.0, -30.0, -30.0]]), [0]).item() < 1e-10  # clamp floor is 1e-12 per term


def test_cbc_requires_two_heads():
    with pytest.raises(ValueError):
        L.cbc_loss(T([[1.0]]), [0])


def test_cbc_two_heads_is_binary_cross_entropy(rng):
    for _ in range(20):
        z = rng.normal(0, 3, (5, 2))
        y = rng.integers(0, 2, 5)
        assert L.cbc_loss(T(z), y).item() == L.bce_loss(T(z), y).item()


def test_hardest_negative_ties_pick_lowest_index():
    assert L.hardest_negative(np.array([[5.0, 1.0, 1.0, 0.0]]), [0]).tolist() == [1]
    assert L.hardest_negative(np.array([[1.0, 1.0, 9.0]]), [2]).tolist() == [0]


def test_bce_examples():
    assert L.bce_loss(T(np.zeros((1, 3))), [0]).item() == pytest.approx(3 * math.log(2))
    assert L.bce_loss(T([[40.0, -40.0, -40.0]]), [0]).item() < 1e-10


def test_total_examples():
    closed, cbc = T([[1.0, 2.0, 3.0]]), T([[2.0, -1.0, 0.0]])
    loss, parts = L.total_loss(closed, T([[2.0, -1.0, 0.0]]), [0], L.LossWeights(0.0))
    assert loss.item() == parts["ce"] + parts["open"]

    # hand values: ce at y=2, cbc at y=0, entropy of [.5, .25, .25]
    ce = L.ce_loss(closed, [2]).item()
    cb = L.cbc_loss(cbc, [0]).item()
    ent = L.entropy_loss(T(np.log([[0.5, 0.25, 0.25]]))).item()
    assert ce + cb + 0.1 * ent == pytest.approx(1.3317, abs=5e-5)

    loss, parts = L.total_loss(closed, cbc, [1], open_loss="bce")
    assert parts["open"] == L.bce_loss(cbc, [1]).item()
    assert loss.item() == pytest.approx(parts["ce"] + parts["open"] + 0.1 * parts["ent"], abs=1e-12)


def test_total_rejects_mismatched_batches():
    with pytest.raises(ValueError):
        L.total_loss(T(np.zeros((2, 3))), T(np.zeros((3, 3))), [0, 1])


def test_negative_lambda_rejected():
    with pytest.raises(ValueError):
        L.LossWeights(-0.1)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 6), st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_losses_match_reference(n, k, seed):
    r = np.random.default_rng(seed)
    z = r.normal(0, 4, (n, k))
    y = r.integers(0, k, n)
    assert L.ce_loss(T(z), y).item() == pytest.approx(ref_ce(z.tolist(), y), rel=1e-10, abs=1e-12)
    assert L.entropy_loss(T(z)).item() == pytest.approx(ref_entropy(z.tolist()), rel=1e-10, abs=1e-12)
    assert L.cbc_loss(T(z), y).item() == pytest.approx(ref_cbc(z.tolist(), y), rel=1e-9, abs=1e-12)
    assert L.bce_loss(T(z), y).item() == pytest.approx(ref_bce(z.tolist(), y), rel=1e-9, abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 8), st.integers(2, 7), st.integers(0, 2**32 - 1), st.floats(0.1, 30))
def test_loss_algebra(n, k, seed, spread):
    r = np.random.default_rng(seed)
    z = r.normal(0, spread, (n, k))
    y = r.integers(0, k, n)
    cb, bc = L.cbc_loss(T(z), y).item(), L.bce_loss(T(z), y).item()
    ent = L.entropy_loss(T(z)).item()
    assert 0 <= cb <= bc
    assert 0 <= ent <= math.log(k) + 1e-12
    assert L.ce_loss(T(z), y).item() >= 0


LOSSES = {
    "ce": lambda z, y: L.ce_loss(z, y),
    "entropy": lambda z, y: L.entropy_loss(z),
    "cbc": lambda z, y: L.cbc_loss(z, y),
    "bce": lambda z, y: L.bce_loss(z, y),
}


@pytest.mark.parametrize("name", sorted(LOSSES))
def test_loss_gradients(name, rng):
    for _ in range(25):
        z = rng.normal(0, 2, (4, 5))
        y = rng.integers(0, 5, 4)
        assert gradcheck(lambda t: LOSSES[name](t, y), z) < 1e-4


def test_total_gradient(rng):
    for _ in range(25):
        c, o = rng.normal(0, 2, (4, 5)), rng.normal(0, 2, (4, 5))
        y = rng.integers(0, 5, 4)
        assert gradcheck(lambda a, b: L.total_loss(a, b, y)[0], c, o) < 1e-4


def test_cbc_gradient_touches_two_heads_per_sample(rng):
    for _ in range(100):
        k = int(rng.integers(3, 8))
        z = rng.normal(0, 3, (1, k))
        y = rng.integers(0, k, 1)
        t = Tensor(z, requires_grad=True)
        with dc.Tape() as tape:
            loss = L.cbc_loss(t, y)
        tape.backward(loss)
        nz = set(np.flatnonzero(t.grad[0]))
        assert nz == {int(y[0]), int(L.hardest_negative(z, y)[0])}
