"""
Checking reverse-mode gradients against finite differences
==========================================================

The library trains its network with a small tape-based autodiff engine.
This script builds a loss from the primitive ops, runs the backward
pass and compares every gradient entry with a central difference.
"""

import numpy as np

from cbcosr import diffcore as dc
from cbcosr import losses as L
from cbcosr.diffcore import Tensor

rng = np.random.default_rng(0)

###############################################################################
# A two-layer network written directly in terms of the ops. Leaves that
# need gradients are created with ``requires_grad=True``; everything else
# is a constant.

x = rng.standard_normal((6, 4))
y = rng.integers(0, 3, 6)
w1 = Tensor(rng.standard_normal((4, 5)) * 0.5, requires_grad=True, name="w1")
w2 = Tensor(rng.standard_normal((5, 3)) * 0.5, requires_grad=True, name="w2")


def loss_fn(a, b):
    h = dc.relu(dc.matmul(Tensor(x), a))
    logits = dc.matmul(h, b)
    return L.cbc_loss(logits, y)


with dc.Tape() as tape:
    loss = loss_fn(w1, w2)
tape.backward(loss)
print(f"loss = {loss.item():.6f}")

###############################################################################
# Central differences with h = 1e-5, one coordinate at a time.


def numeric(param, h=1e-5):
    g = np.zeros_like(param.data)
    for idx in np.ndindex(param.shape):
        orig = param.data[idx]
        param.data[idx] = orig + h
        fp = loss_fn(w1, w2).item()
        param.data[idx] = orig - h
        fm = loss_fn(w1, w2).item()
        param.data[idx] = orig
        g[idx] = (fp - fm) / (2 * h)
    return g


for p in (w1, w2):
    num = numeric(p)
    rel = np.linalg.norm(p.grad - num) / max(np.linalg.norm(num), 1e-8)
    print(f"{p.name}: relative error {rel:.2e}")

###############################################################################
# The open-set loss only looks at the positive head and the single hardest
# negative head of each sample, so the gradient on the logits is sparse:
# two nonzero entries per row.

z = Tensor(rng.normal(0, 3, (4, 6)), requires_grad=True)
labels = np.array([0, 3, 5, 1])
with dc.Tape() as tape:
    out = L.cbc_loss(z, labels)
tape.backward(out)
print("nonzero heads per sample:", (z.grad != 0).sum(axis=1).tolist())
print("hardest negatives:", L.hardest_negative(z.data, labels).tolist())
