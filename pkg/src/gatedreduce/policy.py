"""The actor: keep/discard decisions, delayed rewards and REINFORCE updates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import EPS, DenseLayer, ShapeError, sigmoid, sgd_step
from .representation import LSTMTrace


class RewardConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RewardConfig:
    variant: int = 2
    eta: float = 0.1
    literal_a0: bool = False
    baseline: bool = True

    def __post_init__(self):
        if self.variant not in (0, 1, 2):
            raise RewardConfigError(f"reward variant must be 0, 1 or 2, got {self.variant}")
        if not self.eta >= 0:
            raise RewardConfigError(f"eta must be nonnegative, got {self.eta}")


class PolicyNet:
    """Two dense layers: tanh hidden layer, then one sigmoid unit giving P(keep)."""

    def __init__(self, state_dim, hidden, rng):
        self.state_dim = state_dim
        self.fc1 = DenseLayer(state_dim, hidden, rng)
        self.fc2 = DenseLayer(hidden, 1, rng)

    @property
    def modules(self):
        return {"fc1": self.fc1, "fc2": self.fc2}

    def forward(self, states):
        states = np.asarray(states, dtype=np.float64)
        if states.shape[-1] != self.state_dim:
            raise ShapeError(f"policy expects states of width {self.state_dim}, got {states.shape[-1]}")
        a1, c1 = self.fc1.forward(states.reshape(-1, self.state_dim))
        hid = np.tanh(a1)
        logit, c2 = self.fc2.forward(hid)
        p = sigmoid(logit[:, 0])
        return p.reshape(states.shape[:-1]), (c1, hid, c2, p)

    def backward_logit(self, dlogit, cache):
        """Accumulate parameter grads for upstream gradient on the pre-sigmoid logit."""
        c1, hid, c2, _ = cache
        dhid = self.fc2.backward(np.reshape(dlogit, (-1, 1)), c2)
        self.fc1.backward(dhid * (1.0 - hid**2), c1)

    def zero_grad(self):
        for m in self.modules.values():
            m.zero_grad()


def build_state(x_t, h_prev, c_prev):
    x_t, h_prev, c_prev = (np.asarray(v, dtype=np.float64) for v in (x_t, h_prev, c_prev))
    if not x_t.shape[:-1] == h_prev.shape[:-1] == c_prev.shape[:-1] or h_prev.shape != c_prev.shape:
        raise ShapeError(f"cannot concatenate state parts {x_t.shape}, {h_prev.shape}, {c_prev.shape}")
    return np.concatenate([x_t, h_prev, c_prev], axis=-1)


def action_prob(policy, s):
    p, _ = policy.forward(s)
    return p


def log_prob(p, a):
    p = np.clip(p, EPS, 1.0 - EPS)
    return np.where(np.asarray(a) == 1, np.log(p), np.log1p(-p))


def select_action(p, mode, rng=None):
    """Bernoulli draw when training; deterministic ``p >= 0.5`` when testing."""
    p = np.asarray(p, dtype=np.float64)
    if mode == "train":
        return (rng.random(p.shape) < p).astype(np.int64)
    if mode == "test":
        return (p >= 0.5).astype(np.int64)
    raise ValueError(f"mode must be 'train' or 'test', got {mode!r}")


@dataclass
class Trajectory:
    """Batched rollout record; row ``i`` is one sample's trajectory."""

    states: np.ndarray  # (B, L, S)
    actions: np.ndarray  # (B, L)
    probs: np.ndarray  # (B, L) P(keep)
    log_probs: np.ndarray  # (B, L), 0 at padding
    valid: np.ndarray  # (B, L) bool
    trace: object  # LSTMTrace of the masked run
    reward: np.ndarray | None = None

    @property
    def lengths(self):
        return self.valid.sum(axis=1)

    @property
    def n_discarded(self):
        return ((1 - self.actions) * self.valid).sum(axis=1)

    @property
    def kept_fraction(self):
        return float((self.actions * self.valid).sum() / self.valid.sum())


def rollout(policy, rep, enc, valid=None, mode="train", rng=None):
    """Walk encoded sequence left to right, deciding and advancing the gated LSTM."""
    enc = np.asarray(enc, dtype=np.float64)
    if enc.ndim == 2:
        enc = enc[None]
        valid = None if valid is None else np.asarray(valid)[None]
    B, L, _ = enc.shape
    valid = np.ones((B, L), dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    H = rep.hidden_dim
    states = np.zeros((B, L, enc.shape[2] + 2 * H))
    actions = np.zeros((B, L), dtype=np.int64)
    probs = np.zeros((B, L))
    hs = np.zeros((B, L + 1, H))
    cs = np.zeros((B, L + 1, H))
    h, c = rep.initial_state(B)
    caches = []
    for t in range(L):
        s = build_state(enc[:, t], h, c)
        p = action_prob(policy, s)
        a = select_action(p, mode, rng) * valid[:, t]
        states[:, t], probs[:, t], actions[:, t] = s, p, a
        h, c, cache = rep.masked_step(enc[:, t], h, c, a.astype(bool))
        hs[:, t + 1], cs[:, t + 1] = h, c
        caches.append(cache)
    lp = np.where(valid, log_prob(probs, actions), 0.0)
    trace = LSTMTrace(hs, cs, actions.astype(bool), caches)
    return Trajectory(states, actions, probs, lp, valid, trace)


# -- rewards ------------------------------------------------------------------


def reward_A(probs, labels, variant, literal_a0=False):
    """Classification part of the reward, per sample.

    0: log-likelihood of the true class (loss with the sign flipped unless
    ``literal_a0``); 1: log of the largest class probability; 2: 1 if the
    predicted class is correct else 0.
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if variant == 0:
        ll = np.log(np.maximum(probs[np.arange(len(labels)), labels], EPS))
        return -ll if literal_a0 else ll
    if variant == 1:
        return np.log(np.maximum(probs.max(axis=1), EPS))
    if variant == 2:
        return (probs.argmax(axis=1) == labels).astype(np.float64)
    raise RewardConfigError(f"reward variant must be 0, 1 or 2, got {variant}")


def reward_B(L, L_discarded, eta):
    return eta * np.asarray(L_discarded, dtype=np.float64) / np.asarray(L, dtype=np.float64)


def total_reward(A, B):
    return A + B


def trajectory_reward(traj, class_probs, labels, cfg: RewardConfig):
    A = reward_A(class_probs, labels, cfg.variant, cfg.literal_a0)
    B = reward_B(traj.lengths, traj.n_discarded, cfg.eta)
    traj.reward = total_reward(A, B)
    return traj.reward


def policy_gradient(policy, traj, baseline=True):
    """Fill ``policy`` grads with the batch-mean of sum_t R * grad log pi(a_t|s_t)."""
    if traj.reward is None:
        raise ValueError("trajectory has no reward attached")
    B = traj.actions.shape[0]
    if B == 0:
        raise ValueError("empty trajectory batch")
    adv = traj.reward
    if baseline:
        # identical rewards carry no signal; avoid rounding residue from the mean
        adv = np.zeros_like(adv) if np.all(adv == adv[0]) else adv - adv.mean()
    policy.zero_grad()
    p, cache = policy.forward(traj.states)
    # d log pi / d logit for a Bernoulli(sigmoid(logit)) is a - p
    dlogit = (traj.actions - p) * traj.valid * adv[:, None] / B
    policy.backward_logit(dlogit, cache)


def policy_gradient_update(policy, traj, lr, baseline=True):
    policy_gradient(policy, traj, baseline)
    for m in policy.modules.values():
        sgd_step(m.params, m.grads, lr, ascent=True)
    return policy


def replay_log_prob(policy, traj):
    """Sum over valid steps of log pi(a_t|s_t), recomputed from stored states."""
    p, _ = policy.forward(traj.states)
    return (np.where(traj.valid, log_prob(p, traj.actions), 0.0)).sum(axis=1)
