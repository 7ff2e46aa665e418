"""
Training a patch condition classifier
=====================================

Patches selected from synthetic facades of the three condition classes are
used to fit a softmax regression with momentum SGD. The per-epoch loss
trace is printed, followed by patch-level accuracy on held-out facades.
"""

import numpy as np

from bcond.classifier import TrainConfig, train
from bcond.dataset import ConditionClass
from bcond.evaluation import accuracy, confuse
from bcond.selection import SelectionConfig, select_pipeline
from bcond.synth import render_facade


def patches_for(n_per_class, rng):
    patches, labels = [], []
    for cls in ConditionClass:
        for i in range(n_per_class):
            kept = select_pipeline(render_facade(cls, 256, rng), SelectionConfig(), f"{cls.name}{i}")
            patches += kept
            labels += [cls] * len(kept)
    return patches, labels


rng = np.random.default_rng(1)
train_p, train_y = patches_for(20, rng)
test_p, test_y = patches_for(8, rng)
print(len(train_p), "training patches,", len(test_p), "test patches")

# the library default learning rate (1e-4) is tuned for long runs; a short
# demo on 128-d descriptors needs a larger step
model = train(train_p, train_y, TrainConfig(epochs=30, learning_rate=0.5, seed=0))
print("loss every 5 epochs:", np.round(model.loss_trace[::5], 3))

pred = model.predict_proba(test_p).argmax(axis=1)
m = confuse(test_y, pred.tolist())
print("patch-level confusion (rows = truth A,B,C):")
print(m)
print("patch accuracy", round(accuracy(m), 3))
