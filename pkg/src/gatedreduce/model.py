"""The assembled model: representation, policy and classifier plus the input schema."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .classifier import Classifier
from .container import read_container, write_container
from .data import DataError, KmerVocab, SequenceDataset, StructuredDataset, build_vocab, encode_dataset
from .policy import PolicyNet, rollout
from .representation import Representation, SequenceEncoder, StructuredEncoder

GROUPS = ("representation", "policy", "classifier")


class SchemaError(DataError):
    pass


@dataclass
class Batch:
    inputs: np.ndarray  # (N, F) table rows or (N, L) token ids
    valid: np.ndarray  # (N, L) bool
    y: np.ndarray

    def __len__(self):
        return len(self.y)

    def take(self, idx):
        return Batch(self.inputs[idx], self.valid[idx], self.y[idx])


class GatedReducer:
    def __init__(self, rep, policy, clf, schema, embed_dim, hidden_dim, policy_hidden):
        self.rep, self.policy, self.clf = rep, policy, clf
        self.schema = schema
        self.dims = {"embed_dim": embed_dim, "hidden_dim": hidden_dim, "policy_hidden": policy_hidden}
        self.global_mask = None

    @classmethod
    def build(cls, train, rng, embed_dim=32, hidden_dim=64, policy_hidden=32, k=1, vocab=None):
        if isinstance(train, StructuredDataset):
            encoder = StructuredEncoder(train.n_features, embed_dim, rng, train.categories)
            encoder.fit_scaling(train.X)
            schema = {
                "kind": "structured",
                "feature_names": list(train.feature_names),
                "categories": {str(j): v for j, v in train.categories.items()},
                "class_names": list(train.class_names),
                "center": encoder.center.tolist(),
                "scale": encoder.scale.tolist(),
            }
        elif isinstance(train, SequenceDataset):
            vocab = vocab or build_vocab(train, k)
            encoder = SequenceEncoder(vocab.size, embed_dim, rng)
            schema = {"kind": "sequence", "k": vocab.k, "vocab": vocab.to_list(), "class_names": list(train.class_names)}
        else:
            raise TypeError(f"unsupported dataset type {type(train).__name__}")
        rep = Representation(encoder, embed_dim, hidden_dim, rng)
        policy = PolicyNet(embed_dim + 2 * hidden_dim, policy_hidden, rng)
        clf = Classifier(hidden_dim, len(schema["class_names"]), rng)
        return cls(rep, policy, clf, schema, embed_dim, hidden_dim, policy_hidden)

    # -- parameter groups --------------------------------------------------

    def group_modules(self, group):
        owner = {"representation": self.rep, "policy": self.policy, "classifier": self.clf}[group]
        return owner.modules

    def named_params(self, group):
        out = {}
        for mod_name, mod in self.group_modules(group).items():
            for name, arr in mod.params.items():
                out[f"{group}.{mod_name}.{name}"] = arr
        return out

    def checksum(self, group):
        h = hashlib.sha256()
        for key, arr in sorted(self.named_params(group).items()):
            h.update(key.encode())
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def snapshot(self, groups=GROUPS):
        return {g: {k: v.copy() for k, v in self.named_params(g).items()} for g in groups}

    def restore(self, snap):
        for g, params in snap.items():
            current = self.named_params(g)
            for k, v in params.items():
                current[k][...] = v

    @property
    def n_classes(self):
        return len(self.schema["class_names"])

    @property
    def kind(self):
        return self.schema["kind"]

    @property
    def vocab(self):
        return KmerVocab.from_list(self.schema["k"], self.schema["vocab"])

    # -- inputs ------------------------------------------------------------

    def prepare(self, ds):
        """Turn a dataset into model inputs, checking it against the training schema."""
        if self.kind == "structured":
            if not isinstance(ds, StructuredDataset):
                raise SchemaError("model was trained on a table; got sequence data")
            expected, found = self.schema["feature_names"], list(ds.feature_names)
            if expected != found:
                raise SchemaError(f"feature columns differ: expected {expected}, found {found}")
            X = ds.X.copy()
            y = self._map_labels(ds)
            ref = self.schema["categories"]
            for key, levels in ref.items():
                j = int(key)
                own = ds.categories.get(j)
                if own is None:
                    raise SchemaError(f"column {expected[j]!r} is categorical in training but numeric here")
                lookup = {lvl: i for i, lvl in enumerate(levels)}
                X[:, j] = [lookup.get(own[int(v)], -1) for v in ds.X[:, j]]
            for j in ds.categories:
                if str(j) not in ref:
                    raise SchemaError(f"column {expected[j]!r} is numeric in training but categorical here")
            return Batch(X, np.ones(X.shape, dtype=bool), y)
        if not isinstance(ds, SequenceDataset):
            raise SchemaError("model was trained on sequences; got a table")
        ids, valid = encode_dataset(self.vocab, ds)
        return Batch(ids, valid, self._map_labels(ds))

    def _map_labels(self, ds):
        names = self.schema["class_names"]
        lookup = {n: i for i, n in enumerate(names)}
        missing = sorted(set(ds.class_names) - set(names))
        if missing:
            raise SchemaError(f"labels {missing} not seen in training (expected one of {names})")
        remap = np.array([lookup[n] for n in ds.class_names], dtype=np.int64)
        return remap[ds.y]

    # -- inference ---------------------------------------------------------

    def predict_proba(self, batch, mask="policy"):
        """Class probabilities plus the mask used.

        ``mask`` is ``"all"`` (keep everything), ``"policy"`` (deterministic
        per-sample decisions), ``"global"`` (the voted feature mask) or an
        explicit bool array of shape ``(L,)`` or ``(N, L)``.
        """
        enc, _ = self.rep.encode(batch.inputs)
        if isinstance(mask, str) and mask == "policy":
            traj = rollout(self.policy, self.rep, enc, batch.valid, mode="test")
            m, h_T = traj.actions.astype(bool), traj.trace.h_T
        else:
            if isinstance(mask, str) and mask == "all":
                m = batch.valid.copy()
            elif isinstance(mask, str) and mask == "global":
                if self.global_mask is None:
                    raise ValueError("model has no voted global mask")
                m = batch.valid & self.global_mask[None, :]
            else:
                m = np.broadcast_to(np.asarray(mask, dtype=bool), batch.valid.shape) & batch.valid
            h_T = self.rep.run_masked_lstm(enc, m).h_T
        probs, _ = self.clf.forward(h_T)
        return probs, m

    def default_mask(self):
        if self.kind == "structured" and self.global_mask is not None:
            return "global"
        return "policy"

    # -- persistence -------------------------------------------------------

    def save(self, path, extra_meta=None):
        tensors = []
        for g in GROUPS:
            for mod_name, mod in self.group_modules(g).items():
                for name, arr in mod.params.items():
                    tensors.append((f"{g}.{mod_name}", name, arr))
        meta = {
            "schema": self.schema,
            "dims": self.dims,
            "global_mask": None if self.global_mask is None else [int(v) for v in self.global_mask],
        }
        if extra_meta:
            meta["extra"] = extra_meta
        write_container(path, tensors, meta)

    @classmethod
    def load(cls, path):
        meta, tensors = read_container(path)
        schema, dims = meta["schema"], meta["dims"]
        rng = None  # parameters are overwritten from the file
        if schema["kind"] == "structured":
            cats = {int(j): v for j, v in schema["categories"].items()}
            encoder = StructuredEncoder(len(schema["feature_names"]), dims["embed_dim"], rng, cats,
                                        schema["center"], schema["scale"])
        else:
            encoder = SequenceEncoder(len(schema["vocab"]) + 1, dims["embed_dim"], rng)
        rep = Representation(encoder, dims["embed_dim"], dims["hidden_dim"], rng)
        policy = PolicyNet(dims["embed_dim"] + 2 * dims["hidden_dim"], dims["policy_hidden"], rng)
        clf = Classifier(dims["hidden_dim"], len(schema["class_names"]), rng)
        model = cls(rep, policy, clf, schema, **dims)
        lookup = {}
        for g in GROUPS:
            for mod_name, mod in model.group_modules(g).items():
                for name, arr in mod.params.items():
                    lookup[(f"{g}.{mod_name}", name)] = arr
        if set(lookup) != {(m, n) for m, n, _ in tensors}:
            raise SchemaError(f"{path}: tensor set does not match the model layout")
        for module, name, arr in tensors:
            target = lookup[(module, name)]
            if target.shape != arr.shape:
                raise SchemaError(f"{path}: {module}.{name} has shape {arr.shape}, expected {target.shape}")
            target[...] = arr
        if meta.get("global_mask") is not None:
            model.global_mask = np.array(meta["global_mask"], dtype=bool)
        model.meta_extra = meta.get("extra")
        return model
