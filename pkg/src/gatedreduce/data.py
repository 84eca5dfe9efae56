"""Dataset loading, k-mer encoding and stratified splitting."""

from __future__ import annotations

import csv
import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.model_selection import StratifiedKFold, train_test_split

MISSING_TOKENS = frozenset({"", "?", "NA", "N/A", "NaN", "nan", "null", "NULL"})
ALPHABET = frozenset("ACGT")
UNK_ID = 0


class DataError(ValueError):
    """Malformed or unusable input data."""


@dataclass
class StructuredDataset:
    feature_names: list[str]
    X: np.ndarray
    y: np.ndarray
    class_names: list[str]
    # feature index -> category labels, code = position in the list
    categories: dict[int, list[str]] = field(default_factory=dict)
    label_name: str = "label"

    kind = "structured"

    @property
    def n_classes(self):
        return len(self.class_names)

    @property
    def n_features(self):
        return self.X.shape[1]

    def __len__(self):
        return self.X.shape[0]

    def subset(self, idx):
        idx = np.asarray(idx)
        return StructuredDataset(
            list(self.feature_names), self.X[idx], self.y[idx], list(self.class_names),
            dict(self.categories), self.label_name,
        )


@dataclass
class SequenceDataset:
    sequences: list[str]
    y: np.ndarray
    names: list[str]
    nominal_length: int | None = None
    class_names: list[str] = field(default_factory=lambda: ["0", "1"])

    kind = "sequence"

    @property
    def n_classes(self):
        return len(self.class_names)

    def __len__(self):
        return len(self.sequences)

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return SequenceDataset(
            [self.sequences[i] for i in idx], self.y[idx], [self.names[i] for i in idx],
            self.nominal_length, list(self.class_names),
        )


# -- structured tables -------------------------------------------------------


def _is_float(token):
    try:
        float(token)
    except ValueError:
        return False
    return True


def load_csv(path, label_column=-1, missing_policy="impute", drop_columns=()):
    """Load a header-bearing CSV table into a :class:`StructuredDataset`.

    ``label_column`` is a column name or a (possibly negative) index.
    Columns whose non-missing cells all parse as numbers are numeric; the
    rest are categorical and coded by first appearance, as is the label.
    ``missing_policy`` is ``"impute"`` (median / mode), ``"drop"`` (drop
    rows) or ``"error"``.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise DataError(f"{path}: no data rows")

    if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
        if label_column not in header:
            raise DataError(f"{path}: label column {label_column!r} not found in header {header}")
        label_idx = header.index(label_column)
    else:
        label_idx = int(label_column)
        if not -len(header) <= label_idx < len(header):
            raise DataError(f"{path}: label column index {label_idx} out of range for {len(header)} columns")
        label_idx %= len(header)
    for name in drop_columns:
        if name not in header:
            raise DataError(f"{path}: column {name!r} to drop not found in header")
    dropped = {header.index(n) for n in drop_columns}
    if label_idx in dropped:
        raise DataError(f"{path}: cannot drop the label column")

    for lineno, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields, found {len(r)}")
    cells = [[c.strip() for c in r] for r in body]

    labels_raw = [r[label_idx] for r in cells]
    for lineno, lab in enumerate(labels_raw, start=2):
        if lab in MISSING_TOKENS:
            raise DataError(f"{path}:{lineno}: missing label")

    feat_cols = [j for j in range(len(header)) if j != label_idx and j not in dropped]
    if not feat_cols:
        raise DataError(f"{path}: no feature columns")
    missing = np.array([[r[j] in MISSING_TOKENS for j in feat_cols] for r in cells])
    if missing.any():
        if missing_policy == "error":
            r, c = np.argwhere(missing)[0]
            raise DataError(f"{path}:{r + 2}: missing value in column {header[feat_cols[c]]!r}")
        if missing_policy == "drop":
            keep = ~missing.any(axis=1)
            cells = [r for r, k in zip(cells, keep) if k]
            labels_raw = [lab for lab, k in zip(labels_raw, keep) if k]
            missing = missing[keep]
            if not cells:
                raise DataError(f"{path}: every row has a missing value")
        elif missing_policy != "impute":
            raise DataError(f"unknown missing_policy {missing_policy!r}")

    X = np.zeros((len(cells), len(feat_cols)))
    categories = {}
    for out_j, j in enumerate(feat_cols):
        col = [r[j] for r in cells]
        present = [v for v, m in zip(col, missing[:, out_j]) if not m]
        if not present:
            raise DataError(f"{path}: column {header[j]!r} has no values")
        if all(_is_float(v) for v in present):
            vals = np.array([float(v) if not m else np.nan for v, m in zip(col, missing[:, out_j])])
            if not np.all(np.isfinite(vals[~missing[:, out_j]])):
                raise DataError(f"{path}: column {header[j]!r} has non-finite numbers")
            vals[missing[:, out_j]] = np.median(vals[~missing[:, out_j]])
        else:
            levels = list(dict.fromkeys(present))
            code = {v: k for k, v in enumerate(levels)}
            counts = Counter(code[v] for v in present)
            # ties go to the earliest-seen level
            mode = max(counts, key=lambda k: (counts[k], -k))
            vals = np.array([code[v] if not m else mode for v, m in zip(col, missing[:, out_j])], dtype=float)
            categories[out_j] = levels
        X[:, out_j] = vals

    class_names = list(dict.fromkeys(labels_raw))
    if len(class_names) < 2:
        raise DataError(f"{path}: need at least 2 classes, found {len(class_names)}")
    code = {v: k for k, v in enumerate(class_names)}
    y = np.array([code[v] for v in labels_raw], dtype=np.int64)
    return StructuredDataset([header[j] for j in feat_cols], X, y, class_names, categories, header[label_idx])


def _fmt(v):
    return repr(float(v)) if not float(v).is_integer() else str(int(v))


def write_csv(ds: StructuredDataset, path):
    """Write ``ds`` so that :func:`load_csv` reproduces it exactly."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ds.feature_names + [ds.label_name])
        for row, lab in zip(ds.X, ds.y):
            out = []
            for j, v in enumerate(row):
                out.append(ds.categories[j][int(v)] if j in ds.categories else _fmt(v))
            w.writerow(out + [ds.class_names[lab]])


# -- sequences ----------------------------------------------------------------


def _check_alphabet(seq, name):
    for pos, ch in enumerate(seq, start=1):
        if ch not in ALPHABET:
            raise DataError(f"record {name!r}: invalid character {ch!r} at position {pos}")


def _read_label_table(path):
    labels = {}
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected two columns, found {len(parts)}")
            if lineno == 1 and not parts[1].lstrip("-").isdigit():
                continue  # header
            labels[parts[0]] = parts[1]
    return labels


def _parse_label(raw, where):
    if raw not in ("0", "1"):
        raise DataError(f"{where}: label must be 0 or 1, got {raw!r}")
    return int(raw)


def load_sequences(path, labels_path=None, expected_length=None):
    """Load DNA sequences with binary labels.

    FASTA input carries the label after the last ``|`` of each header
    (``>enh_17|1``). Otherwise each non-empty line is one sequence and
    ``labels_path`` is a two-column table keyed by 0-based line index.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty sequence file")

    names, seqs, labels = [], [], []
    if lines[0].startswith(">"):
        chunks = []
        for ln in lines:
            if ln.startswith(">"):
                header = ln[1:].strip()
                if "|" not in header:
                    raise DataError(f"{path}: header {header!r} lacks a '|<label>' suffix")
                name, raw = header.rsplit("|", 1)
                names.append(name)
                labels.append(_parse_label(raw.strip(), f"{path}: record {name!r}"))
                chunks.append([])
            else:
                chunks[-1].append(ln)
        seqs = ["".join(c).upper() for c in chunks]
    else:
        if labels_path is None:
            raise DataError(f"{path}: plain sequence file needs a label table")
        table = _read_label_table(labels_path)
        for i, ln in enumerate(lines):
            key = str(i)
            if key not in table:
                raise DataError(f"{labels_path}: no label for sequence index {i}")
            names.append(key)
            seqs.append(ln.upper())
            labels.append(_parse_label(table[key], f"{labels_path}: index {i}"))

    for name, s in zip(names, seqs):
        if not s:
            raise DataError(f"record {name!r}: empty sequence")
        _check_alphabet(s, name)
        if expected_length is not None and len(s) != expected_length:
            warnings.warn(f"record {name!r}: length {len(s)} differs from declared {expected_length}", stacklevel=2)
    return SequenceDataset(seqs, np.array(labels, dtype=np.int64), names, expected_length)


def write_fasta(ds: SequenceDataset, path):
    with Path(path).open("w") as fh:
        for name, s, lab in zip(ds.names, ds.sequences, ds.y):
            fh.write(f">{name}|{int(lab)}\n{s}\n")


# -- k-mers -------------------------------------------------------------------


def kmer_tokenize(seq, k):
    if k < 1 or k > len(seq):
        raise DataError(f"k={k} invalid for sequence of length {len(seq)}")
    return [seq[i : i + k] for i in range(len(seq) - k + 1)]


@dataclass
class KmerVocab:
    k: int
    index: dict[str, int]

    @property
    def size(self):
        """Number of embedding rows, including the UNK row."""
        return len(self.index) + 1

    def to_list(self):
        return sorted(self.index, key=self.index.get)

    @classmethod
    def from_list(cls, k, kmers):
        return cls(k, {km: i for i, km in enumerate(kmers, start=1)})


def build_vocab(train, k):
    """Map k-mers to ids 1.. in order of first appearance; 0 is UNK."""
    seqs = train.sequences if isinstance(train, SequenceDataset) else list(train)
    if not seqs:
        raise DataError("cannot build a vocabulary from an empty corpus")
    index = {}
    for s in seqs:
        for tok in kmer_tokenize(s, k):
            if tok not in index:
                index[tok] = len(index) + 1
    return KmerVocab(k, index)


def encode(vocab, tokens):
    return [vocab.index.get(t, UNK_ID) for t in tokens]


def encode_dataset(vocab, ds: SequenceDataset):
    """Token-id matrix padded with UNK plus a validity mask, both (N, L)."""
    rows = [encode(vocab, kmer_tokenize(s, vocab.k)) for s in ds.sequences]
    width = max(len(r) for r in rows)
    ids = np.zeros((len(rows), width), dtype=np.int64)
    valid = np.zeros((len(rows), width), dtype=bool)
    for i, r in enumerate(rows):
        ids[i, : len(r)] = r
        valid[i, : len(r)] = True
    return ids, valid


# -- splits ---------------------------------------------------------------------


@dataclass
class SplitSpec:
    mode: str = "holdout"  # holdout | kfold | independent-tests
    ratio: float = 2.0 / 3.0  # training fraction for holdout runs
    folds: int = 10
    seed: int = 0
    runs: int = 10

    def __post_init__(self):
        if self.mode not in ("holdout", "kfold", "independent-tests"):
            raise DataError(f"unknown split mode {self.mode!r}")
        if not 0.0 < self.ratio < 1.0:
            raise DataError(f"split ratio must lie in (0, 1), got {self.ratio}")
        if self.folds < 2:
            raise DataError(f"need at least 2 folds, got {self.folds}")


def _labels_of(dataset):
    return np.asarray(dataset.y if hasattr(dataset, "y") else dataset)


def _require_class_sizes(y, minimum, class_names=None):
    for cls, n in sorted(Counter(y.tolist()).items()):
        if n < minimum:
            name = class_names[cls] if class_names else cls
            raise DataError(f"class {name!r} has {n} members, fewer than the {minimum} required")


def holdout_split(dataset, ratio, seed):
    y = _labels_of(dataset)
    if len(y) == 0:
        raise DataError("cannot split an empty dataset")
    _require_class_sizes(y, 2, getattr(dataset, "class_names", None))
    n_train = int(math.floor(len(y) * ratio + 0.5))
    idx = np.arange(len(y))
    train, test = train_test_split(idx, train_size=n_train, test_size=len(y) - n_train, stratify=y, random_state=seed)
    return np.sort(train), np.sort(test)


def kfold_split(dataset, folds, seed):
    y = _labels_of(dataset)
    if len(y) == 0:
        raise DataError("cannot split an empty dataset")
    _require_class_sizes(y, folds, getattr(dataset, "class_names", None))
    skf = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    return [(np.sort(tr), np.sort(te)) for tr, te in skf.split(np.zeros(len(y)), y)]


def split(dataset, spec: SplitSpec):
    """Stratified partition(s) of ``dataset`` as index arrays.

    holdout -> ``(train, test)``; kfold -> list of ``(train, test)``;
    independent-tests -> one holdout per seed ``spec.seed + r``.
    """
    if spec.mode == "holdout":
        return holdout_split(dataset, spec.ratio, spec.seed)
    if spec.mode == "kfold":
        return kfold_split(dataset, spec.folds, spec.seed)
    return [holdout_split(dataset, spec.ratio, spec.seed + r) for r in range(spec.runs)]
