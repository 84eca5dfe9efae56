import struct

import numpy as np
import pytest

from gatedreduce.container import ContainerError, read_container, write_container
from gatedreduce.data import SequenceDataset, StructuredDataset
from gatedreduce.model import SchemaError, GatedReducer
from gatedreduce.synthetic import motif_sequences, separable_table
from gatedreduce.training import TrainConfig, fit

SMALL = TrainConfig(embed_dim=5, hidden_dim=6, policy_hidden=4, phase1_epochs=2, phase2_epochs=1, phase3_epochs=1)


class TestContainer:
    def test_round_trip(self, tmp_path):
        t = [("a", "w", np.arange(6.0).reshape(2, 3)), ("b", "s", np.array(2.5))]
        write_container(tmp_path / "m", t, {"k": [1, 2]})
        meta, back = read_container(tmp_path / "m")
        assert meta == {"k": [1, 2]}
        for (m1, n1, a1), (m2, n2, a2) in zip(t, back):
            assert (m1, n1) == (m2, n2)
            np.testing.assert_array_equal(a1, a2)

    def test_rejects_foreign_and_damaged_files(self, tmp_path):
        p = tmp_path / "m"
        write_container(p, [("a", "w", np.ones(4))], {})
        raw = p.read_bytes()
        cases = {
            "x": b"not a model",
            "short": raw[:10],
            "trunc": raw[:-8],
            "extra": raw + b"\0",
            "newer": raw[:8] + struct.pack("<I", 99) + raw[12:],
        }
        for name, blob in cases.items():
            (tmp_path / name).write_bytes(blob)
            with pytest.raises(ContainerError):
                read_container(tmp_path / name)
        with pytest.raises(ContainerError):
            read_container(tmp_path / "missing")


class TestModelPersistence:
    def test_structured_save_load_predicts_identically(self, tmp_path):
        ds = separable_table(40, 3, informative=2, seed=0)
        model = fit(ds, SMALL).model
        model.save(tmp_path / "m.grm", {"note": "x"})
        again = GatedReducer.load(tmp_path / "m.grm")
        batch = model.prepare(ds)
        for mask in ("policy", "all", "global"):
            np.testing.assert_array_equal(model.predict_proba(batch, mask)[0], again.predict_proba(batch, mask)[0])
        assert again.meta_extra == {"note": "x"}
        assert all(model.checksum(g) == again.checksum(g) for g in ("representation", "policy", "classifier"))

    def test_sequence_save_load(self, tmp_path):
        ds = motif_sequences(30, 10, motif="GAT", seed=1)
        model = fit(ds, TrainConfig(**{**SMALL.to_dict(), "kmer_k": 3})).model
        model.save(tmp_path / "s.grm")
        again = GatedReducer.load(tmp_path / "s.grm")
        assert again.vocab == model.vocab
        b = model.prepare(ds)
        np.testing.assert_array_equal(model.predict_proba(b)[0], again.predict_proba(b)[0])


class TestSchema:
    @pytest.fixture
    def model(self):
        ds = StructuredDataset(["a", "c"], np.array([[1.0, 0], [2.0, 1], [3.0, 0], [0.5, 1]]), np.array([0, 1, 0, 1]),
                               ["no", "yes"], {1: ["red", "blue"]})
        return GatedReducer.build(ds, np.random.default_rng(0), 4, 4, 3)

    def test_categories_remapped_by_name(self, model):
        other = StructuredDataset(["a", "c"], np.array([[1.0, 0], [1.0, 1]]), np.array([1, 0]), ["yes", "no"],
                                  {1: ["blue", "green"]})
        batch = model.prepare(other)
        assert batch.inputs[:, 1].tolist() == [1, -1]
        assert batch.y.tolist() == [0, 1]

    def test_column_mismatch(self, model):
        other = StructuredDataset(["a", "b"], np.zeros((2, 2)), np.array([0, 1]), ["no", "yes"], {1: ["red"]})
        with pytest.raises(SchemaError, match="feature columns"):
            model.prepare(other)

    def test_unseen_label(self, model):
        other = StructuredDataset(["a", "c"], np.zeros((2, 2)), np.array([0, 1]), ["no", "maybe"], {1: ["red"]})
        with pytest.raises(SchemaError, match="maybe"):
            model.prepare(other)

    def test_wrong_kind(self, model):
        with pytest.raises(SchemaError):
            model.prepare(SequenceDataset(["ACGT"], np.array([0]), ["s"]))

    def test_global_mask_required(self, model):
        batch = model.prepare(StructuredDataset(["a", "c"], np.zeros((1, 2)), np.array([0]), ["no"], {1: ["red"]}))
        with pytest.raises(ValueError, match="voted"):
            model.predict_proba(batch, "global")
