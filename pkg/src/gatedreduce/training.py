"""Three-phase training schedule, feature voting and evaluation harnesses."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .classifier import predict_label
from .data import holdout_split, kfold_split
from .metrics import evaluate_predictions
from .model import GatedReducer
from .nn import sgd_step
from .policy import RewardConfig, policy_gradient_update, rollout, trajectory_reward

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    """Numerical failure during training (non-finite loss or reward)."""


@dataclass
class TrainConfig:
    embed_dim: int = 32
    hidden_dim: int = 64
    policy_hidden: int = 32
    batch_size: int = 32
    phase1_epochs: int = 100
    phase2_epochs: int = 100
    phase3_epochs: int = 50
    phase1_lr: float = 0.1
    phase2_lr: float = 0.01
    phase3_lr: float = 0.01
    reward: RewardConfig = field(default_factory=RewardConfig)
    vote_threshold: float = 0.5
    seed: int = 0
    kmer_k: int = 1
    early_stopping: bool = True
    val_fraction: float = 0.1
    patience: int = 10

    def __post_init__(self):
        if isinstance(self.reward, dict):
            self.reward = RewardConfig(**self.reward)
        for n in (1, 2, 3):
            if getattr(self, f"phase{n}_epochs") < 0:
                raise ValueError(f"phase{n}_epochs must be >= 0")
            if not getattr(self, f"phase{n}_lr") > 0:
                raise ValueError(f"phase{n}_lr must be > 0")
        if not 0.0 <= self.vote_threshold <= 1.0:
            raise ValueError(f"vote_threshold must lie in [0, 1], got {self.vote_threshold}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def to_dict(self):
        return asdict(self)


@dataclass
class PhaseReport:
    phase: int
    train_acc: float
    test_acc: float | None = None
    val_acc: float | None = None
    mean_reward: float | None = None
    kept_fraction: float | None = None
    initial_kept_fraction: float | None = None
    mask_kept_fraction: float = 1.0
    history: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


@dataclass
class FeatureVoteTally:
    discard_counts: np.ndarray
    n_samples: int

    @property
    def proportions(self):
        return self.discard_counts / self.n_samples


@dataclass
class FitResult:
    model: GatedReducer
    reports: list
    tally: FeatureVoteTally | None = None


def _rngs(seed):
    init, shuffle, policy, split = np.random.SeedSequence(seed).spawn(4)
    return {
        "init": np.random.default_rng(init),
        "shuffle": np.random.default_rng(shuffle),
        "policy": np.random.default_rng(policy),
        "split": int(np.random.default_rng(split).integers(2**31)),
    }


def _minibatches(n, size, rng):
    order = rng.permutation(n)
    for start in range(0, n, size):
        yield order[start : start + size]


def _check_finite(value, what):
    if not np.all(np.isfinite(value)):
        raise TrainingError(f"non-finite {what}: {value}")


def _step_rep_clf(model, lr):
    for group in ("representation", "classifier"):
        for mod in model.group_modules(group).values():
            sgd_step(mod.params, mod.grads, lr)


def _zero(model, groups):
    for g in groups:
        for mod in model.group_modules(g).values():
            mod.zero_grad()


def supervised_step(model, batch, lr, mask=None):
    """One descent step of rep + classifier on the summed cross-entropy (gradient / N)."""
    _zero(model, ("representation", "classifier"))
    enc, ecache = model.rep.encode(batch.inputs)
    trace = model.rep.run_masked_lstm(enc, batch.valid if mask is None else mask)
    probs, ccache = model.clf.forward(trace.h_T)
    loss = float(-np.log(np.maximum(probs[np.arange(len(batch)), batch.y], 1e-12)).sum())
    _check_finite(loss, "loss")
    model.rep.encode_backward(model.rep.lstm_backward(model.clf.backward(probs, batch.y, ccache), trace), ecache)
    _step_rep_clf(model, lr)
    return loss


def accuracy(model, batch, mask):
    if len(batch) == 0:
        return None
    probs, _ = model.predict_proba(batch, mask)
    return float((predict_label(probs) == batch.y).mean())


def _eval_mask(model, phase):
    if phase == 1:
        return "all"
    return model.default_mask()


def _refresh_vote(model, train, cfg):
    if model.kind == "structured":
        mask, tally = voting_reduce(model, train, cfg.vote_threshold)
        model.global_mask = mask
        return tally
    return None


def _mask_fraction(model, batch, mask):
    _, m = model.predict_proba(batch, mask)
    return float(m[batch.valid].mean())


def _finish_report(report, model, train, test, val, cfg):
    mask = _eval_mask(model, report.phase)
    report.train_acc = accuracy(model, train, mask)
    report.test_acc = accuracy(model, test, mask) if test is not None else None
    report.val_acc = accuracy(model, val, mask) if val is not None else None
    report.mask_kept_fraction = _mask_fraction(model, train, mask)
    return report


class _EarlyStopper:
    """Tracks the best validation accuracy and restores those parameters."""

    def __init__(self, model, val, mask_fn, patience, groups):
        self.model, self.val, self.mask_fn = model, val, mask_fn
        self.patience, self.groups = patience, groups
        self.best, self.best_snap, self.bad = -1.0, None, 0

    def update(self):
        acc = accuracy(self.model, self.val, self.mask_fn())
        if acc > self.best:
            self.best, self.best_snap, self.bad = acc, self.model.snapshot(self.groups), 0
        else:
            self.bad += 1
        return acc, self.bad > self.patience

    def restore(self):
        if self.best_snap is not None:
            self.model.restore(self.best_snap)


def phase1_pretrain(model, train, cfg, rng, test=None, val=None):
    """Fit representation + classifier with every position kept."""
    losses, val_accs = [], []
    stopper = None
    if val is not None and cfg.early_stopping:
        stopper = _EarlyStopper(model, val, lambda: "all", cfg.patience, ("representation", "classifier"))
    for _ in range(cfg.phase1_epochs):
        total = 0.0
        for idx in _minibatches(len(train), cfg.batch_size, rng):
            total += supervised_step(model, train.take(idx), cfg.phase1_lr)
        losses.append(total / len(train))
        if stopper is not None:
            acc, stop = stopper.update()
            val_accs.append(acc)
            if stop:
                break
    if stopper is not None:
        stopper.restore()
    report = PhaseReport(1, 0.0, history={"loss": losses, "val_acc": val_accs})
    return _finish_report(report, model, train, test, val, cfg)


def _policy_epoch(model, train, enc, cfg, lr, rng_shuffle, rng_policy, update=True, finetune_lr=None):
    rewards, kept = [], []
    for idx in _minibatches(len(train), cfg.batch_size, rng_shuffle):
        b = train.take(idx)
        if finetune_lr is not None:
            # supervised step under sampled masks, then a fresh rollout for the policy step
            _zero(model, ("representation", "classifier"))
            x, ecache = model.rep.encode(b.inputs)
            traj = rollout(model.policy, model.rep, x, b.valid, "train", rng_policy)
            probs, ccache = model.clf.forward(traj.trace.h_T)
            _check_finite(probs, "class probabilities")
            dX = model.rep.lstm_backward(model.clf.backward(probs, b.y, ccache), traj.trace)
            model.rep.encode_backward(dX, ecache)
            _step_rep_clf(model, finetune_lr)
            x, _ = model.rep.encode(b.inputs)
        else:
            x = enc[idx]
        traj = rollout(model.policy, model.rep, x, b.valid, "train", rng_policy)
        probs, _ = model.clf.forward(traj.trace.h_T)
        r = trajectory_reward(traj, probs, b.y, cfg.reward)
        _check_finite(r, "reward")
        if update:
            policy_gradient_update(model.policy, traj, lr, baseline=cfg.reward.baseline)
        rewards.append(r)
        kept.append((traj.actions * traj.valid).sum(axis=1) / traj.valid.sum(axis=1))
    return float(np.concatenate(rewards).mean()), float(np.concatenate(kept).mean())


def phase2_rl(model, train, cfg, rng_shuffle, rng_policy, test=None, val=None):
    """REINFORCE on the policy with representation and classifier frozen."""
    enc, _ = model.rep.encode(train.inputs)
    _, init_kept = _policy_epoch(model, train, enc, cfg, cfg.phase2_lr, rng_shuffle, rng_policy, update=False)
    rewards, kept = [], []
    for _ in range(cfg.phase2_epochs):
        r, k = _policy_epoch(model, train, enc, cfg, cfg.phase2_lr, rng_shuffle, rng_policy)
        rewards.append(r)
        kept.append(k)
    tally = _refresh_vote(model, train, cfg)
    report = PhaseReport(
        2, 0.0, mean_reward=rewards[-1] if rewards else None,
        kept_fraction=kept[-1] if kept else init_kept, initial_kept_fraction=init_kept,
        history={"mean_reward": rewards, "kept_fraction": kept},
    )
    return _finish_report(report, model, train, test, val, cfg), tally


def phase3_finetune(model, train, cfg, rng_shuffle, rng_policy, test=None, val=None):
    """Alternate per batch: supervised step on sampled masks, then a policy step."""
    rewards, kept, val_accs = [], [], []
    stopper = None
    if val is not None and cfg.early_stopping and cfg.phase3_epochs > 0:
        stopper = _EarlyStopper(model, val, model.default_mask, cfg.patience, ("representation", "policy", "classifier"))
        stopper.update()
    for _ in range(cfg.phase3_epochs):
        r, k = _policy_epoch(model, train, None, cfg, cfg.phase3_lr, rng_shuffle, rng_policy, finetune_lr=cfg.phase3_lr)
        rewards.append(r)
        kept.append(k)
        if stopper is not None:
            acc, stop = stopper.update()
            val_accs.append(acc)
            if stop:
                break
    if stopper is not None:
        stopper.restore()
    tally = _refresh_vote(model, train, cfg)
    report = PhaseReport(
        3, 0.0, mean_reward=rewards[-1] if rewards else None,
        kept_fraction=kept[-1] if kept else None,
        history={"mean_reward": rewards, "kept_fraction": kept, "val_acc": val_accs},
    )
    return _finish_report(report, model, train, test, val, cfg), tally


def voting_reduce(model, batch, threshold):
    """Drop feature ``j`` for everyone iff its test-mode discard rate exceeds ``threshold``."""
    if len(batch) == 0:
        raise ValueError("cannot vote on an empty dataset")
    _, m = model.predict_proba(batch, "policy")
    discards = ((~m) & batch.valid).sum(axis=0)
    tally = FeatureVoteTally(discards.astype(np.int64), len(batch))
    return ~(tally.proportions > threshold), tally


def fit(train_ds, cfg: TrainConfig, test_ds=None):
    """Build a model on ``train_ds`` and run all three phases."""
    rngs = _rngs(cfg.seed)
    model = GatedReducer.build(train_ds, rngs["init"], cfg.embed_dim, cfg.hidden_dim, cfg.policy_hidden, cfg.kmer_k)
    train = model.prepare(train_ds)
    val = None
    if model.kind == "sequence" and cfg.early_stopping and cfg.val_fraction > 0:
        tr_idx, val_idx = holdout_split(train.y, 1.0 - cfg.val_fraction, rngs["split"])
        train, val = train.take(tr_idx), train.take(val_idx)
    test = model.prepare(test_ds) if test_ds is not None else None

    rep1 = phase1_pretrain(model, train, cfg, rngs["shuffle"], test, val)
    log.info("phase 1: train %.4f test %s", rep1.train_acc, rep1.test_acc)
    tally = None
    reports = [rep1]
    rep2, tally = phase2_rl(model, train, cfg, rngs["shuffle"], rngs["policy"], test, val)
    reports.append(rep2)
    log.info("phase 2: reward %s kept %.3f test %s", rep2.mean_reward, rep2.kept_fraction, rep2.test_acc)
    rep3, tally3 = phase3_finetune(model, train, cfg, rngs["shuffle"], rngs["policy"], test, val)
    tally = tally3 or tally
    reports.append(rep3)
    log.info("phase 3: train %.4f test %s", rep3.train_acc, rep3.test_acc)
    return FitResult(model, reports, tally)


def evaluate_model(model, ds, mask=None):
    """Deterministic metrics report of ``model`` on ``ds``."""
    batch = model.prepare(ds)
    probs, m = model.predict_proba(batch, model.default_mask() if mask is None else mask)
    preds = predict_label(probs)
    scores = probs[:, 1] if model.n_classes == 2 else None
    return evaluate_predictions(preds, batch.y, model.n_classes, scores), preds, m


def kept_feature_count(model, ds):
    if model.kind == "structured" and model.global_mask is not None:
        return int(model.global_mask.sum())
    batch = model.prepare(ds)
    _, m = model.predict_proba(batch, "policy")
    return float(m.sum(axis=1).mean())


def mean_std(values):
    """Mean and sample standard deviation (0 for a single value)."""
    values = np.asarray(values, dtype=np.float64)
    std = float(values.std(ddof=1)) if len(values) > 1 else 0.0
    return float(values.mean()), std


def format_mean_std(mean, std, digits=4):
    return f"{mean:.{digits}f}({std:.{digits}f})"


def _run_one(args):
    ds, train_idx, test_idx, cfg, index = args
    train, test = ds.subset(train_idx), ds.subset(test_idx)
    result = fit(train, cfg, test)
    report, _, _ = evaluate_model(result.model, test)
    return {
        "index": index,
        "seed": cfg.seed,
        "n_train": len(train_idx),
        "n_test": len(test_idx),
        "metrics": report.to_dict(),
        "kept_features": kept_feature_count(result.model, test),
        "phases": [r.to_dict() for r in result.reports],
    }


def _map(fn, jobs, items):
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            out = list(pool.map(fn, items))
    else:
        out = [fn(it) for it in items]
    return sorted(out, key=lambda r: r["index"])


def _aggregate(rows):
    agg = {}
    keys = ["overall_acc", "acc", "sn", "sp", "mcc_eq4", "mcc_standard", "auc"]
    for key in keys:
        vals = [r["metrics"][key] for r in rows]
        if any(v is None for v in vals):
            continue
        m, s = mean_std(vals)
        agg[key] = {"mean": m, "std": s, "formatted": format_mean_std(m, s)}
    return agg


def run_independent_tests(ds, cfg: TrainConfig, n=10, ratio=2.0 / 3.0, jobs=1):
    """``n`` stratified holdout runs with seeds ``cfg.seed + r``."""
    if n < 1:
        raise ValueError("need at least one run")
    items = []
    for r in range(n):
        seed = cfg.seed + r
        tr, te = holdout_split(ds, ratio, seed)
        items.append((ds, tr, te, _with_seed(cfg, seed), r))
    runs = _map(_run_one, jobs, items)
    return {"protocol": "independent", "n": n, "runs": runs, "aggregate": _aggregate(runs)}


def run_10fcv(ds, cfg: TrainConfig, folds=10, jobs=1):
    """Stratified k-fold evaluation; also records the kept-feature count per fold."""
    splits = kfold_split(ds, folds, cfg.seed)
    items = [(ds, tr, te, cfg, i) for i, (tr, te) in enumerate(splits)]
    rows = _map(_run_one, jobs, items)
    correct = sum(r["metrics"]["overall_acc"] * r["n_test"] for r in rows)
    agg = _aggregate(rows)
    agg["pooled_acc"] = correct / sum(r["n_test"] for r in rows)
    return {
        "protocol": "cv",
        "folds": folds,
        "runs": rows,
        "aggregate": agg,
        "kept_features": [r["kept_features"] for r in rows],
    }


def _with_seed(cfg, seed):
    d = cfg.to_dict()
    d["seed"] = seed
    return TrainConfig(**d)
