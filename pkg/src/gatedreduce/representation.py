"""Representation module: per-position embeddings and the skip-gated LSTM.

A sample becomes an ``encoded sequence``: one standardized ``embed_dim`` vector
per position (per feature for tables, per k-mer for DNA). The LSTM then
advances only at kept positions; at a discarded position the previous
``(h, c)`` is carried forward untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import (
    BackwardStateError,
    EmbeddingTable,
    LSTMCell,
    Module,
    ShapeError,
    standardize_backward,
    standardize_forward,
    uniform_init,
)

NORM_EPS = 1e-8


class StructuredEncoder(Module):
    """Lifts each table cell to a vector.

    Numeric feature ``t`` maps to ``z_t * u_t + v_t`` where ``z_t`` is the
    value standardized with training-set statistics. Categorical features
    look up a per-feature table whose row 0 is reserved for unseen levels.
    """

    def __init__(self, n_features, embed_dim, rng, categories=None, center=None, scale=None):
        super().__init__()
        self.n_features, self.embed_dim = n_features, embed_dim
        self.categories = {int(j): list(v) for j, v in (categories or {}).items()}
        self.numeric = np.array([j not in self.categories for j in range(n_features)])
        self.center = np.zeros(n_features) if center is None else np.asarray(center, dtype=float)
        self.scale = np.ones(n_features) if scale is None else np.asarray(scale, dtype=float)
        self._register("U", uniform_init(rng, (n_features, embed_dim), 1))
        self._register("V", uniform_init(rng, (n_features, embed_dim), 1))
        self.tables = {j: EmbeddingTable(len(levels) + 1, embed_dim, rng) for j, levels in self.categories.items()}
        for j, table in self.tables.items():
            self.params[f"cat{j}"] = table.params["E"]
            self.grads[f"cat{j}"] = table.grads["E"]

    def fit_scaling(self, X):
        X = np.asarray(X, dtype=float)
        self.center = np.where(self.numeric, X.mean(axis=0), 0.0)
        std = X.std(axis=0)
        self.scale = np.where(self.numeric & (std > 0), std, 1.0)

    def forward(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ShapeError(f"expected (batch, {self.n_features}) table rows, got {X.shape}")
        z = np.where(self.numeric, (X - self.center) / self.scale, 0.0)
        out = z[:, :, None] * self.params["U"] + self.params["V"]
        caches = {}
        for j, table in self.tables.items():
            out[:, j, :], caches[j] = table.forward(X[:, j].astype(np.int64) + 1)
        return out, (z, caches)

    def backward(self, dout, cache):
        if cache is None:
            raise BackwardStateError("structured encoder backward without forward")
        z, caches = cache
        num = self.numeric[None, :, None]
        self.grads["U"] += (dout * z[:, :, None] * num).sum(axis=0)
        self.grads["V"] += (dout * num).sum(axis=0)
        for j, table in self.tables.items():
            table.backward(dout[:, j, :], caches[j])


class SequenceEncoder(Module):
    def __init__(self, vocab_size, embed_dim, rng):
        super().__init__()
        self.table = EmbeddingTable(vocab_size, embed_dim, rng)
        self.params = self.table.params
        self.grads = self.table.grads
        self.embed_dim = embed_dim

    def forward(self, ids):
        return self.table.forward(ids)

    def backward(self, dout, cache):
        self.table.backward(dout, cache)


@dataclass
class LSTMTrace:
    """States ``h[:, t]``, ``c[:, t]`` for t = 0..L (index 0 is the initial state)."""

    h: np.ndarray
    c: np.ndarray
    mask: np.ndarray
    caches: list

    @property
    def h_T(self):
        return self.h[:, -1]


class Representation:
    """Encoder + normalization + skip-gated LSTM, with backprop through all three."""

    def __init__(self, encoder, embed_dim, hidden_dim, rng):
        self.encoder = encoder
        self.embed_dim, self.hidden_dim = embed_dim, hidden_dim
        self.lstm = LSTMCell(embed_dim, hidden_dim, rng)

    @property
    def modules(self):
        return {"encoder": self.encoder, "lstm": self.lstm}

    def encode(self, inputs):
        """Raw batch -> encoded sequence array ``(B, L, embed_dim)`` plus cache."""
        raw, enc_cache = self.encoder.forward(inputs)
        out, norm_cache = standardize_forward(raw, NORM_EPS)
        return out, (enc_cache, norm_cache)

    def encode_backward(self, dX, cache):
        enc_cache, norm_cache = cache
        self.encoder.backward(standardize_backward(dX, norm_cache), enc_cache)

    def initial_state(self, batch):
        return np.zeros((batch, self.hidden_dim)), np.zeros((batch, self.hidden_dim))

    def masked_step(self, x_t, h, c, keep):
        """One step of the gated recurrence; ``keep`` is a bool vector over the batch."""
        h_new, c_new, cache = self.lstm.forward(x_t, h, c)
        k = np.asarray(keep, dtype=bool)[:, None]
        return np.where(k, h_new, h), np.where(k, c_new, c), cache

    def run_masked_lstm(self, enc, mask):
        enc = np.asarray(enc, dtype=np.float64)
        mask = np.asarray(mask)
        if enc.ndim == 2:
            enc, mask = enc[None], mask[None]
        B, L, _ = enc.shape
        if mask.shape != (B, L):
            raise ShapeError(f"mask shape {mask.shape} does not match sequence batch {(B, L)}")
        keep = mask.astype(bool)
        hs = np.zeros((B, L + 1, self.hidden_dim))
        cs = np.zeros((B, L + 1, self.hidden_dim))
        h, c = self.initial_state(B)
        caches = []
        for t in range(L):
            h, c, cache = self.masked_step(enc[:, t], h, c, keep[:, t])
            hs[:, t + 1], cs[:, t + 1] = h, c
            caches.append(cache)
        return LSTMTrace(hs, cs, keep, caches)

    def lstm_backward(self, dh_T, trace, dc_T=None):
        """Backprop from ``h_T`` through the masked recurrence; returns the gradient w.r.t. the encoded sequence."""
        if not trace.caches:
            raise BackwardStateError("empty trace")
        B, L = trace.mask.shape
        dh = np.array(dh_T, dtype=np.float64, copy=True)
        dc = np.zeros_like(dh) if dc_T is None else np.array(dc_T, dtype=np.float64, copy=True)
        dX = np.zeros((B, L, self.embed_dim))
        for t in range(L - 1, -1, -1):
            k = trace.mask[:, t][:, None]
            dx, dh_prev, dc_prev = self.lstm.backward(dh * k, dc * k, trace.caches[t])
            dX[:, t] = dx
            dh = np.where(k, dh_prev, dh)
            dc = np.where(k, dc_prev, dc)
        return dX


def encode_sample(rep, sample):
    """encoded sequence ``(L, embed_dim)`` for a single table row or token-id vector."""
    enc, _ = rep.encode(np.asarray(sample)[None])
    return enc[0]
