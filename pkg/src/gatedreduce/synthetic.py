"""Seeded toy datasets for smoke tests and demos."""

from __future__ import annotations

import numpy as np

from .data import SequenceDataset, StructuredDataset


def separable_table(n=200, n_features=8, informative=3, margin=0.5, seed=0):
    """Two linearly separable classes; only the first ``informative`` columns matter."""
    rng = np.random.default_rng(seed)
    w = np.zeros(n_features)
    w[:informative] = rng.choice([-1.0, 1.0], informative)
    rows, labels = [], []
    while len(rows) < n:
        x = rng.normal(size=n_features)
        score = x @ w
        if abs(score) < margin:
            continue
        rows.append(x)
        labels.append(int(score > 0))
    names = [f"f{j}" for j in range(n_features)]
    return StructuredDataset(names, np.array(rows), np.array(labels), ["0", "1"])


def motif_sequences(n=200, length=40, motif="GATTACA", seed=0):
    """Random DNA where positives carry ``motif`` at a random offset."""
    rng = np.random.default_rng(seed)
    alphabet = np.array(list("ACGT"))
    seqs, labels = [], []
    for i in range(n):
        s = "".join(rng.choice(alphabet, length))
        lab = i % 2
        if lab:
            at = int(rng.integers(0, length - len(motif) + 1))
            s = s[:at] + motif + s[at + len(motif) :]
        seqs.append(s)
        labels.append(lab)
    return SequenceDataset(seqs, np.array(labels), [f"s{i}" for i in range(n)], length)
