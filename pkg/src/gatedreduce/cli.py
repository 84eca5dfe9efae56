"""Command-line interface.

Exit codes: 0 success, 1 runtime or numerical failure, 2 usage, config or
data error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config
from .container import ContainerError
from .data import DataError, holdout_split, load_csv, load_sequences
from .model import GatedReducer
from .plotting import plot_discard_proportions, plot_phases, plot_policy_history, plot_runs
from .policy import RewardConfigError
from .reports import (
    ManifestError,
    dumps,
    file_sha256,
    format_table,
    read_mask_file,
    write_history_csv,
    write_manifest,
    write_mask_file,
    write_phase_csv,
    write_runs_csv,
)
from .training import TrainingError, evaluate_model, fit, run_10fcv, run_independent_tests, voting_reduce

log = logging.getLogger("gatedreduce")

USAGE_ERRORS = (ConfigError, DataError, ContainerError, ManifestError, RewardConfigError)

_FLAG_KEYS = {
    "seed": "train.seed",
    "kmer_k": "train.kmer_k",
    "reward_variant": "reward.variant",
    "eta": "reward.eta",
    "vote_threshold": "train.vote_threshold",
    "phase1_epochs": "train.phase1_epochs",
    "phase2_epochs": "train.phase2_epochs",
    "phase3_epochs": "train.phase3_epochs",
    "phase1_lr": "train.phase1_lr",
    "phase2_lr": "train.phase2_lr",
    "phase3_lr": "train.phase3_lr",
}


def _add_overrides(p):
    p.add_argument("--config", help="sectioned key=value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--kmer-k", type=int)
    p.add_argument("--reward-variant", type=int, choices=(0, 1, 2))
    p.add_argument("--eta", type=float)
    p.add_argument("--vote-threshold", type=float)
    for n in (1, 2, 3):
        p.add_argument(f"--phase{n}-epochs", type=int)
        p.add_argument(f"--phase{n}-lr", type=float)
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override any config key (repeatable)")
    p.add_argument("--out", required=True, help="output directory")


def _overrides(args):
    pairs = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        pairs[key.strip()] = value
    for attr, key in _FLAG_KEYS.items():
        v = getattr(args, attr, None)
        if v is not None:
            pairs[key] = str(v)
    return pairs


def _run_config(args):
    cfg = load_config(args.config, _overrides(args))
    if not cfg.data.path:
        raise ConfigError("no dataset: set data.path in the config or pass --set data.path=...")
    return cfg


def data_options(dcfg, path=None):
    return {
        "kind": dcfg.resolved_kind(path or dcfg.path),
        "label_column": dcfg.label_column,
        "drop_columns": list(dcfg.drop_columns),
        "missing_policy": dcfg.missing_policy,
        "expected_length": dcfg.expected_length or None,
    }


def load_dataset(path, options, labels_path=None):
    if options["kind"] == "structured":
        return load_csv(path, options["label_column"], options["missing_policy"], options["drop_columns"])
    return load_sequences(path, labels_path or None, options.get("expected_length"))


def _fingerprint(path):
    return {"path": str(path), "sha256": file_sha256(path)}


def _print(text):
    sys.stdout.write(text + "\n")


def _metric_rows(metrics):
    order = ("overall_acc", "acc", "sn", "sp", "mcc_eq4", "mcc_standard", "auc")
    return [(k, metrics[k]) for k in order if metrics.get(k) is not None]


# -- subcommands -------------------------------------------------------------


def cmd_train(args):
    cfg = _run_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    opts = data_options(cfg.data)
    ds = load_dataset(cfg.data.path, opts, cfg.data.labels_path)
    data_fp = {"train": _fingerprint(cfg.data.path)}
    if cfg.data.test_path:
        train_ds = ds
        test_ds = load_dataset(cfg.data.test_path, opts, cfg.data.test_labels_path)
        data_fp["test"] = _fingerprint(cfg.data.test_path)
        split_info = {"mode": "files"}
    elif cfg.data.test_fraction > 0:
        tr, te = holdout_split(ds, 1.0 - cfg.data.test_fraction, cfg.train.seed)
        train_ds, test_ds = ds.subset(tr), ds.subset(te)
        split_info = {"mode": "holdout", "test_fraction": cfg.data.test_fraction, "seed": cfg.train.seed,
                      "test_indices": te}
    else:
        train_ds, test_ds, split_info = ds, None, {"mode": "none"}

    result = fit(train_ds, cfg.train, test_ds)
    model = result.model
    model_path = out / "model.grm"
    model.save(model_path, {"data": opts})

    metrics = None
    if test_ds is not None:
        metrics = evaluate_model(model, test_ds)[0].to_dict()
    reports = [r.to_dict() for r in result.reports]
    body = {
        "config": cfg.to_dict(),
        "data": data_fp,
        "split": split_info,
        "seeds": {"master": cfg.train.seed},
        "phases": reports,
        "metrics": metrics,
        "global_mask": model.global_mask,
        "feature_names": model.schema.get("feature_names"),
        "model": {"path": model_path.name, "sha256": file_sha256(model_path)},
    }
    write_manifest(out / "manifest.json", "train", body)
    write_phase_csv(out / "phases.csv", reports)
    write_history_csv(out / "history.csv", reports)
    if model.kind == "structured" and result.tally is not None:
        write_mask_file(out / "mask.tsv", model.schema["feature_names"], model.global_mask,
                        result.tally.proportions)
    plot_phases(reports, out / "phases.png")
    plot_policy_history(reports, out / "policy.png")

    _print(format_table(("phase", "train_acc", "test_acc", "mean_reward", "kept_fraction"),
                        [(r["phase"], r["train_acc"], r["test_acc"], r["mean_reward"], r["mask_kept_fraction"])
                         for r in reports]))
    if metrics:
        _print("")
        _print(format_table(("metric", "value"), _metric_rows(metrics)))
    _print(f"\nwrote {out}")
    return 0


def cmd_evaluate(args):
    model = GatedReducer.load(args.model)
    opts = dict((getattr(model, "meta_extra", None) or {}).get("data", {}))
    opts.setdefault("kind", model.kind)
    opts.setdefault("label_column", "-1")
    opts.setdefault("drop_columns", [])
    opts.setdefault("missing_policy", "impute")
    if args.label_column is not None:
        opts["label_column"] = args.label_column
    ds = load_dataset(args.data, opts, args.labels)
    mask = None
    if args.mask:
        names, keep, _ = read_mask_file(args.mask)
        if model.kind != "structured" or names != model.schema["feature_names"]:
            raise DataError(f"mask features {names} do not match model features {model.schema.get('feature_names')}")
        mask = keep
    report, preds, used = evaluate_model(model, ds, mask)
    body = {
        "model": _fingerprint(args.model),
        "data": _fingerprint(args.data),
        "metrics": report.to_dict(),
        "mask_kept_fraction": float(used.mean()),
        "predictions": preds,
    }
    text = dumps(body)
    if args.out:
        Path(args.out).write_text(text)
    _print(format_table(("metric", "value"), _metric_rows(report.to_dict())))
    return 0


def _harness_outputs(out, name, result, label):
    out.mkdir(parents=True, exist_ok=True)
    write_runs_csv(out / f"{name}.csv", result)
    plot_runs(result["runs"], out / f"{name}.png", label)
    agg = result["aggregate"]
    rows = [(k, agg[k]["formatted"]) for k in ("overall_acc", "acc", "sn", "sp", "mcc_eq4", "mcc_standard", "auc")
            if k in agg]
    _print(format_table(("metric", "mean(std)"), rows))


def cmd_cv(args):
    cfg = _run_config(args)
    folds = args.folds or cfg.eval.folds
    opts = data_options(cfg.data)
    ds = load_dataset(cfg.data.path, opts, cfg.data.labels_path)
    result = run_10fcv(ds, cfg.train, folds=folds, jobs=args.jobs or cfg.eval.jobs)
    out = Path(args.out)
    _harness_outputs(out, "folds", result, "fold")
    write_manifest(out / "manifest.json", "cv",
                   {"config": cfg.to_dict(), "data": {"train": _fingerprint(cfg.data.path)}, "result": result})
    _print(f"pooled accuracy {result['aggregate']['pooled_acc']:.4f}; kept features per fold {result['kept_features']}")
    return 0


def cmd_independent(args):
    cfg = _run_config(args)
    runs = args.runs or cfg.eval.runs
    opts = data_options(cfg.data)
    ds = load_dataset(cfg.data.path, opts, cfg.data.labels_path)
    result = run_independent_tests(ds, cfg.train, n=runs, ratio=1.0 - cfg.data.test_fraction,
                                   jobs=args.jobs or cfg.eval.jobs)
    out = Path(args.out)
    _harness_outputs(out, "runs", result, "run")
    write_manifest(out / "manifest.json", "independent",
                   {"config": cfg.to_dict(), "data": {"train": _fingerprint(cfg.data.path)}, "result": result})
    return 0


def cmd_reduce(args):
    model = GatedReducer.load(args.model)
    if model.kind != "structured":
        raise DataError("feature voting applies to structured data only; this model was trained on sequences")
    opts = dict((getattr(model, "meta_extra", None) or {}).get("data", {}))
    opts["kind"] = "structured"
    opts.setdefault("label_column", "-1")
    opts.setdefault("drop_columns", [])
    opts.setdefault("missing_policy", "impute")
    if args.label_column is not None:
        opts["label_column"] = args.label_column
    if not 0.0 <= args.vote_threshold <= 1.0:
        raise ConfigError(f"--vote-threshold must lie in [0, 1], got {args.vote_threshold}")
    ds = load_dataset(args.data, opts)
    keep, tally = voting_reduce(model, model.prepare(ds), args.vote_threshold)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_mask_file(out, model.schema["feature_names"], keep, tally.proportions)
    plot_discard_proportions(model.schema["feature_names"], tally.proportions, args.vote_threshold,
                             out.with_suffix(".png"))
    _print(f"kept {int(keep.sum())} of {len(keep)} features; wrote {out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="gatedreduce", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run the three training phases and save a model")
    _add_overrides(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="deterministic evaluation of a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--labels", help="label table for plain sequence files")
    p.add_argument("--label-column")
    p.add_argument("--mask", help="mask file written by 'reduce' or 'train'")
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("cv", help="stratified k-fold cross-validation")
    _add_overrides(p)
    p.add_argument("--folds", type=int)
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("independent", help="repeated stratified holdout runs")
    _add_overrides(p)
    p.add_argument("--runs", type=int)
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_independent)

    p = sub.add_parser("reduce", help="vote a global feature mask from a trained policy")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--label-column")
    p.add_argument("--vote-threshold", type=float, default=0.5)
    p.add_argument("--out", required=True, help="mask file path")
    p.set_defaults(func=cmd_reduce)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except USAGE_ERRORS as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except (TrainingError, FloatingPointError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return 1
    except (OSError, RuntimeError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
