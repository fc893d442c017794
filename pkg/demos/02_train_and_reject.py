"""
Training a classifier that can say "unknown"
============================================

Five Gaussian clusters are used for training. Three more clusters are
held back and only appear at test time. The network has a softmax head
for the known classes and one binary head per known class. A test
sample is accepted when the binary head of its predicted class is
confident enough.
"""

import numpy as np

from cbcosr import data as D
from cbcosr import evaluation as E
from cbcosr import model as M
from cbcosr import openset as O
from cbcosr.trainer import TrainConfig, train

###############################################################################
# Data: 8 classes in 16 dimensions, means 8 standard deviations apart.

full = D.generate_synthetic(D.SyntheticSpec(num_classes=8, dim=16, separation=8.0, seed=0))
train_set, test_set = D.stratified_split(full, 0.2, seed=0)
split = D.make_split(8, 5, seed=0)
print("known classes:", split.known_ids, " unknown classes:", split.unknown_ids)

known_train, _ = D.apply_split(train_set, split)
test_known, test_unknown = D.apply_split(test_set, split)

###############################################################################
# Train for 20 epochs of momentum SGD. The loss is cross-entropy on the
# softmax head, the hard-negative binary loss on the open-set heads and a
# small entropy penalty.

cfg = M.ModelConfig(input_dim=16, num_known=5)
params, state = train(known_train, cfg, TrainConfig(epochs=20))
for row in state.epoch_log[::5] + state.epoch_log[-1:]:
    print(f"epoch {row['epoch']:2d}  ce {row['ce']:.4f}  open {row['open']:.4f}  ent {row['ent']:.4f}")

###############################################################################
# Score the test samples. Known samples should get high scores and
# unknown ones low scores; AUROC measures how well the two are ranked.

ck, ok = M.predict_logits(params, test_known.features)
cu, ou = M.predict_logits(params, test_unknown.features)
for method in O.METHODS:
    _, sk = O.scores(method, ck, ok)
    _, su = O.scores(method, cu, ou)
    print(f"{method}: AUROC {E.pct(E.auroc(sk, su))}")

###############################################################################
# Thresholding at gamma = 0.9 turns scores into decisions.

pk, sk = O.cbc_scores(ck, ok)
pu, su = O.cbc_scores(cu, ou)
decisions = np.concatenate([O.decide_batch(pk, sk, 0.9), O.decide_batch(pu, su, 0.9)])
truth = np.concatenate([test_known.labels, np.full(len(test_unknown), O.UNKNOWN)])
print("closed-set accuracy:", E.pct(E.closed_accuracy(pk, test_known.labels)))
print("open-set accuracy:  ", E.pct(E.open_accuracy(decisions, truth)))
print("single sample:", O.decide(O.cbc_score(cu[0], ou[0]), 0.9))
