import numpy as np
import pytest

from gatedreduce.classifier import Classifier, classifier_loss, classify, predict_label


def test_probabilities_are_normalized():
    rng = np.random.default_rng(0)
    clf = Classifier(4, 3, rng)
    p = classify(clf, rng.normal(size=(5, 4)))
    assert p.shape == (5, 3)
    np.testing.assert_allclose(p.sum(1), 1.0)


def test_loss_is_summed_cross_entropy():
    p = np.array([[0.5, 0.5], [0.2, 0.8]])
    assert classifier_loss(p, np.array([0, 1])) == pytest.approx(-np.log(0.5) - np.log(0.8))
    assert classifier_loss(p[0], 0) == pytest.approx(-np.log(0.5))


def test_ties_go_to_lowest_index():
    assert predict_label(np.array([[0.4, 0.4, 0.2], [0.1, 0.45, 0.45]])).tolist() == [0, 1]


def test_descent_reduces_loss():
    rng = np.random.default_rng(1)
    clf = Classifier(3, 2, rng)
    h = rng.normal(size=(20, 3))
    y = (h[:, 0] > 0).astype(int)
    before = classifier_loss(classify(clf, h), y)
    for _ in range(50):
        clf.fc.zero_grad()
        probs, cache = clf.forward(h)
        clf.backward(probs, y, cache)
        clf.fc.params["W"] -= 0.5 * clf.fc.grads["W"]
        clf.fc.params["b"] -= 0.5 * clf.fc.grads["b"]
    assert classifier_loss(classify(clf, h), y) < before
