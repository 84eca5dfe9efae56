"""Run manifests, delimited tables and mask files."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__

MANIFEST_VERSION = 1
METRIC_COLUMNS = ("overall_acc", "acc", "sn", "sp", "mcc_eq4", "mcc_standard", "auc")


class ManifestError(ValueError):
    pass


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dumps(obj):
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def write_manifest(path, command, body):
    manifest = {"manifest_version": MANIFEST_VERSION, "tool": "gatedreduce", "tool_version": __version__,
                "command": command}
    manifest.update(body)
    Path(path).write_text(dumps(manifest))
    return manifest


def load_manifest(path):
    data = json.loads(Path(path).read_text())
    version = data.get("manifest_version")
    if not isinstance(version, int):
        raise ManifestError(f"{path}: missing manifest_version")
    if version > MANIFEST_VERSION:
        raise ManifestError(f"{path}: manifest version {version} is newer than supported {MANIFEST_VERSION}")
    return data


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def write_phase_csv(path, reports):
    cols = ("phase", "train_acc", "test_acc", "val_acc", "mean_reward", "kept_fraction", "initial_kept_fraction",
            "mask_kept_fraction")
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in reports:
            w.writerow([_fmt(r[c]) for c in cols])


def write_history_csv(path, reports):
    """Long-format per-epoch series: phase, epoch, series, value."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("phase", "epoch", "series", "value"))
        for r in reports:
            for series, values in sorted(r["history"].items()):
                for epoch, v in enumerate(values, start=1):
                    w.writerow((r["phase"], epoch, series, _fmt(float(v))))


def write_runs_csv(path, result):
    """One row per fold/run, then ``mean`` and ``mean(std)`` rows."""
    cols = ("index", "seed", "n_train", "n_test") + METRIC_COLUMNS + ("kept_features",)
    agg = result["aggregate"]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in result["runs"]:
            row = [r["index"] + 1, r["seed"], r["n_train"], r["n_test"]]
            row += [_fmt(r["metrics"][m]) for m in METRIC_COLUMNS]
            row.append(_fmt(r["kept_features"]))
            w.writerow(row)
        w.writerow(["mean(std)", "", "", ""] + [agg[m]["formatted"] if m in agg else "" for m in METRIC_COLUMNS] + [""])


def write_mask_file(path, names, keep, proportions):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(("feature", "keep", "discard_proportion"))
        for n, k, p in zip(names, keep, proportions):
            w.writerow((n, int(k), f"{float(p):.6f}"))


def read_mask_file(path):
    names, keep, props = [], [], []
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh, delimiter="\t"))
    if not rows or rows[0][:2] != ["feature", "keep"]:
        raise ManifestError(f"{path}: not a mask file (expected a 'feature<TAB>keep' header)")
    for lineno, r in enumerate(rows[1:], start=2):
        if len(r) < 2 or r[1] not in ("0", "1"):
            raise ManifestError(f"{path}:{lineno}: malformed mask row {r}")
        names.append(r[0])
        keep.append(r[1] == "1")
        props.append(float(r[2]) if len(r) > 2 and r[2] else float("nan"))
    return names, np.array(keep, dtype=bool), np.array(props)


def format_table(headers, rows):
    cells = [[str(h) for h in headers]] + [[("" if v is None else (f"{v:.4f}" if isinstance(v, float) else str(v)))
                                            for v in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)
