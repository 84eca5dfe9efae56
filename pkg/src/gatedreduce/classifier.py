"""Softmax classification head over the final LSTM hidden state."""

from __future__ import annotations

import numpy as np

from .nn import DenseLayer, cross_entropy, cross_entropy_logit_grad, softmax


class Classifier:
    def __init__(self, hidden_dim, n_classes, rng):
        self.n_classes = n_classes
        self.fc = DenseLayer(hidden_dim, n_classes, rng)

    @property
    def modules(self):
        return {"fc": self.fc}

    def forward(self, h_T):
        logits, cache = self.fc.forward(h_T)
        return softmax(logits), cache

    def backward(self, probs, labels, cache):
        """Grads of the batch-mean cross-entropy; returns d loss / d h_T."""
        return self.fc.backward(cross_entropy_logit_grad(probs, labels), cache)


def classify(clf, h_T):
    return clf.forward(h_T)[0]


def classifier_loss(probs, labels):
    """Summed cross-entropy over the batch."""
    return float(np.sum(cross_entropy(np.atleast_2d(probs), np.atleast_1d(labels))))


def predict_label(probs):
    """Argmax over classes; ties resolve to the lowest index."""
    return np.argmax(probs, axis=-1)
