"""Differentiable building blocks with hand-written gradients.

Every layer follows the same convention: ``forward`` returns the output and
a cache object, ``backward`` consumes the upstream gradient plus that cache,
accumulates parameter gradients into ``layer.grads`` and returns the
gradient with respect to the layer input. Inputs are batched along the
first axis; a 1-D input is treated as a batch of one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS = 1e-12


class ShapeError(ValueError):
    """Raised when array dimensions do not match a layer's declared sizes."""


class BackwardStateError(RuntimeError):
    """Raised when ``backward`` is called without a matching forward cache."""


def sigmoid(v):
    v = np.asarray(v, dtype=np.float64)
    # split by sign so exp never overflows
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def sigmoid_grad(s):
    """Derivative of the sigmoid expressed through its output ``s``."""
    return s * (1.0 - s)


def softmax(v):
    v = np.asarray(v, dtype=np.float64)
    z = v - v.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(v):
    v = np.asarray(v, dtype=np.float64)
    z = v - v.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy(probs, label):
    """Negative log-likelihood of ``label`` under ``probs`` (floored at EPS).

    Accepts a single distribution with an int label, or a batch ``(N, C)``
    with an int array of labels, in which case one loss per row is returned.
    """
    probs = np.asarray(probs, dtype=np.float64)
    label = np.asarray(label)
    n_classes = probs.shape[-1]
    if np.any(label < 0) or np.any(label >= n_classes):
        raise IndexError(f"label out of range for {n_classes} classes: {label}")
    if probs.ndim == 1:
        return float(-np.log(max(probs[int(label)], EPS)))
    picked = probs[np.arange(probs.shape[0]), label]
    return -np.log(np.maximum(picked, EPS))


def cross_entropy_logit_grad(probs, labels):
    """d(mean cross-entropy)/d(logits) for a batch: (softmax - onehot) / N."""
    probs = np.atleast_2d(probs)
    grad = probs.copy()
    grad[np.arange(grad.shape[0]), labels] -= 1.0
    return grad / grad.shape[0]


def _as_batch(x, width, what):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != width:
        raise ShapeError(f"{what}: expected trailing dim {width}, got shape {x.shape}")
    return x


def uniform_init(rng, shape, fan_in):
    """U(-1/sqrt(fan_in), 1/sqrt(fan_in)); zeros when ``rng`` is None (shells filled in later)."""
    if rng is None:
        return np.zeros(shape)
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Holds named parameter arrays and matching gradient accumulators."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def _register(self, name, value):
        self.params[name] = np.asarray(value, dtype=np.float64)
        self.grads[name] = np.zeros_like(self.params[name])

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0.0)


# -- dense ------------------------------------------------------------------


@dataclass
class DenseCache:
    x: np.ndarray


class DenseLayer(Module):
    def __init__(self, n_in, n_out, rng=None, W=None, b=None):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        if W is None:
            if rng is None:
                W = np.zeros((n_out, n_in))
            else:
                W = uniform_init(rng, (n_out, n_in), n_in)
        if b is None:
            b = np.zeros(n_out) if rng is None else uniform_init(rng, (n_out,), n_in)
        W = np.asarray(W, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if W.shape != (n_out, n_in) or b.shape != (n_out,):
            raise ShapeError(f"dense params {W.shape}/{b.shape} do not match {n_in}->{n_out}")
        self._register("W", W)
        self._register("b", b)

    @property
    def W(self):
        return self.params["W"]

    @property
    def b(self):
        return self.params["b"]

    def forward(self, x):
        squeeze = np.ndim(x) == 1
        xb = _as_batch(x, self.n_in, "dense_forward")
        y = xb @ self.W.T + self.b
        return (y[0] if squeeze else y), DenseCache(xb)

    def backward(self, dy, cache):
        if not isinstance(cache, DenseCache):
            raise BackwardStateError("dense backward needs the cache from its forward pass")
        dy = _as_batch(dy, self.n_out, "dense_backward")
        self.grads["W"] += dy.T @ cache.x
        self.grads["b"] += dy.sum(axis=0)
        return dy @ self.W


def dense_forward(layer, x):
    return layer.forward(x)[0]


# -- embedding --------------------------------------------------------------


@dataclass
class EmbeddingCache:
    ids: np.ndarray


class EmbeddingTable(Module):
    def __init__(self, vocab_size, embed_dim, rng=None, E=None):
        super().__init__()
        self.vocab_size, self.embed_dim = vocab_size, embed_dim
        if E is None:
            # one-hot lookup: fan_in is 1
            E = np.zeros((vocab_size, embed_dim)) if rng is None else uniform_init(rng, (vocab_size, embed_dim), 1)
        E = np.asarray(E, dtype=np.float64)
        if E.shape != (vocab_size, embed_dim):
            raise ShapeError(f"embedding table {E.shape} != ({vocab_size}, {embed_dim})")
        self._register("E", E)

    def forward(self, ids):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab_size):
            raise IndexError(f"token id out of range [0, {self.vocab_size})")
        return self.params["E"][ids], EmbeddingCache(ids)

    def backward(self, dy, cache):
        if not isinstance(cache, EmbeddingCache):
            raise BackwardStateError("embedding backward needs the cache from its forward pass")
        np.add.at(self.grads["E"], cache.ids, dy)


# -- LSTM cell --------------------------------------------------------------

GATES = ("i", "f", "o", "g")


@dataclass
class LSTMCache:
    z: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    tanh_c: np.ndarray


class LSTMCell(Module):
    """Standard LSTM cell; each gate owns ``W_<gate>`` (H x (D+H)) and ``b_<gate>``.

    The gate input is ``[x_t, h_prev]``.
    """

    def __init__(self, input_dim, hidden_dim, rng=None):
        super().__init__()
        self.input_dim, self.hidden_dim = input_dim, hidden_dim
        fan_in = input_dim + hidden_dim
        for gate in GATES:
            if rng is None:
                W, b = np.zeros((hidden_dim, fan_in)), np.zeros(hidden_dim)
            else:
                W = uniform_init(rng, (hidden_dim, fan_in), fan_in)
                b = uniform_init(rng, (hidden_dim,), fan_in)
            self._register(f"W_{gate}", W)
            self._register(f"b_{gate}", b)

    def forward(self, x, h_prev, c_prev):
        squeeze = np.ndim(x) == 1
        x = _as_batch(x, self.input_dim, "lstm_step x")
        h_prev = _as_batch(h_prev, self.hidden_dim, "lstm_step h")
        c_prev = _as_batch(c_prev, self.hidden_dim, "lstm_step c")
        if not x.shape[0] == h_prev.shape[0] == c_prev.shape[0]:
            raise ShapeError("lstm_step: batch sizes differ")
        z = np.concatenate([x, h_prev], axis=1)
        p = self.params
        i = sigmoid(z @ p["W_i"].T + p["b_i"])
        f = sigmoid(z @ p["W_f"].T + p["b_f"])
        o = sigmoid(z @ p["W_o"].T + p["b_o"])
        g = np.tanh(z @ p["W_g"].T + p["b_g"])
        c = f * c_prev + i * g
        tanh_c = np.tanh(c)
        h = o * tanh_c
        cache = LSTMCache(z, c_prev, i, f, o, g, tanh_c)
        if squeeze:
            return h[0], c[0], cache
        return h, c, cache

    def backward(self, dh, dc, cache):
        """Returns ``(dx, dh_prev, dc_prev)``; ``dc`` is the gradient arriving at c_t from later steps."""
        if not isinstance(cache, LSTMCache):
            raise BackwardStateError("lstm backward needs the cache from its forward pass")
        dh = _as_batch(dh, self.hidden_dim, "lstm_backward dh")
        dc = _as_batch(dc, self.hidden_dim, "lstm_backward dc")
        dc = dc + dh * cache.o * (1.0 - cache.tanh_c**2)
        pre = {
            "o": dh * cache.tanh_c * sigmoid_grad(cache.o),
            "i": dc * cache.g * sigmoid_grad(cache.i),
            "f": dc * cache.c_prev * sigmoid_grad(cache.f),
            "g": dc * cache.i * (1.0 - cache.g**2),
        }
        dz = np.zeros_like(cache.z)
        for gate in GATES:
            self.grads[f"W_{gate}"] += pre[gate].T @ cache.z
            self.grads[f"b_{gate}"] += pre[gate].sum(axis=0)
            dz += pre[gate] @ self.params[f"W_{gate}"]
        dx = dz[:, : self.input_dim]
        dh_prev = dz[:, self.input_dim :]
        dc_prev = dc * cache.f
        return dx, dh_prev, dc_prev


def lstm_step(cell, x_t, h_prev, c_prev):
    h, c, _ = cell.forward(x_t, h_prev, c_prev)
    return h, c


# -- normalization ----------------------------------------------------------


@dataclass
class NormCache:
    xhat: np.ndarray
    inv_std: np.ndarray


def standardize_forward(x, eps=1e-8):
    """Standardize along the last axis to mean 0 and variance 1."""
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv_std
    return xhat, NormCache(xhat, inv_std)


def standardize_backward(dy, cache):
    if not isinstance(cache, NormCache):
        raise BackwardStateError("standardize backward needs its forward cache")
    xhat = cache.xhat
    mean_dy = dy.mean(axis=-1, keepdims=True)
    mean_dy_xhat = (dy * xhat).mean(axis=-1, keepdims=True)
    return cache.inv_std * (dy - mean_dy - xhat * mean_dy_xhat)


# -- update -----------------------------------------------------------------


def sgd_step(params, grads, lr, ascent=False):
    """In-place ``p -= lr * g`` (or ``p += lr * g`` when ``ascent``)."""
    sign = 1.0 if ascent else -1.0
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter {p.shape}")
        p += sign * lr * g
    return params
