"""Small worked input/output cases for each building block."""

import json
import math
from pathlib import Path

import numpy as np
import pytest

from gatedreduce import cli
from gatedreduce.classifier import Classifier, classifier_loss, predict_label
from gatedreduce.data import (
    DataError,
    KmerVocab,
    SequenceDataset,
    build_vocab,
    encode,
    holdout_split,
    kmer_tokenize,
    load_csv,
    write_csv,
)
from gatedreduce.metrics import ConfusionCounts, acc, confusion, mcc_eq4, mcc_standard, overall_accuracy, sn, sp
from gatedreduce.model import GatedReducer
from gatedreduce.nn import DenseLayer, LSTMCell, cross_entropy, sgd_step, sigmoid, sigmoid_grad, softmax
from gatedreduce.policy import (
    PolicyNet,
    RewardConfig,
    build_state,
    log_prob,
    reward_A,
    reward_B,
    rollout,
    select_action,
    total_reward,
)
from gatedreduce.representation import Representation, SequenceEncoder, StructuredEncoder
from gatedreduce.synthetic import separable_table
from gatedreduce.training import TrainConfig, fit, phase1_pretrain, phase2_rl, phase3_finetune

ROOT = Path(__file__).resolve().parents[1]


class TestPrimitives:
    def test_dense_cases(self):
        layer = DenseLayer(2, 2, W=np.eye(2), b=np.zeros(2))
        np.testing.assert_array_equal(layer.forward(np.array([3.0, -1.0]))[0], [3.0, -1.0])
        const = DenseLayer(3, 1, W=np.zeros((1, 3)), b=np.array([0.5]))
        assert const.forward(np.array([7.0, -2.0, 1.0]))[0].tolist() == [0.5]

    def test_dense_against_dot_loop(self):
        rng = np.random.default_rng(0)
        layer = DenseLayer(4, 4, rng)
        x = rng.normal(size=4)
        ref = [sum(layer.W[i, j] * x[j] for j in range(4)) + layer.b[i] for i in range(4)]
        np.testing.assert_allclose(layer.forward(x)[0], ref, atol=1e-14)

    def test_sigmoid_cases(self):
        assert sigmoid(np.array([0.0]))[0] == 0.5
        assert abs(sigmoid(np.array([50.0]))[0] - 1.0) < 1e-9
        assert sigmoid_grad(sigmoid(np.array([0.0])))[0] == 0.25

    def test_softmax_cases(self):
        np.testing.assert_array_equal(softmax(np.zeros(2)), [0.5, 0.5])
        np.testing.assert_allclose(softmax(np.full(3, 1000.0)), [1 / 3] * 3)
        v = np.array([0.3, -1.2, 2.0])
        e = [math.exp(t) for t in v]
        np.testing.assert_allclose(softmax(v), [t / sum(e) for t in e], atol=1e-15)

    def test_zero_lstm(self):
        cell = LSTMCell(2, 3)
        h, c, _ = cell.forward(np.ones(2), np.zeros(3), np.zeros(3))
        assert not h.any() and not c.any()
        v = np.array([1.0, -2.0, 4.0])
        _, c, _ = cell.forward(np.ones(2), np.zeros(3), v)
        np.testing.assert_array_equal(c, 0.5 * v)

    def test_cross_entropy_cases(self):
        assert cross_entropy(np.array([1.0, 0.0]), 0) == 0.0
        assert cross_entropy(np.array([0.5, 0.5]), 1) == pytest.approx(math.log(2))
        rng = np.random.default_rng(0)
        p = softmax(rng.normal(size=(5, 3)))
        y = rng.integers(0, 3, 5)
        naive = sum(-math.log(p[i, j]) for i in range(5) for j in range(3) if y[i] == j) / 5
        assert cross_entropy(p, y).mean() == pytest.approx(naive)

    def test_sgd_cases(self):
        w = {"w": np.array([1.0])}
        sgd_step(w, {"w": np.array([2.0])}, 0.1)
        assert w["w"][0] == pytest.approx(0.8)
        sgd_step(w, {"w": np.array([2.0])}, 0.0)
        assert w["w"][0] == pytest.approx(0.8)


class TestDataCases:
    def test_single_class_table_rejected(self, tmp_path):
        p = tmp_path / "one.csv"
        p.write_text("x,y\n1.0,a\n")
        with pytest.raises(DataError, match="2 classes"):
            load_csv(p, "y")

    def test_kmer_cases(self):
        assert len(kmer_tokenize("A" * 200, 3)) == 198
        assert kmer_tokenize("ACGT", 1) == ["A", "C", "G", "T"]
        assert kmer_tokenize("ACGT", 4) == ["ACGT"]

    def test_vocab_cases(self):
        assert build_vocab(["AC", "CA"], 1).index == {"A": 1, "C": 2}
        assert build_vocab(["ACGT"], 2).index == {"AC": 1, "CG": 2, "GT": 3}
        v = KmerVocab(1, {"A": 1, "C": 2})
        assert encode(v, ["A", "C", "A"]) == [1, 2, 1]
        assert encode(v, ["G"]) == [0]

    def test_breast_holdout_sizes(self):
        ds = load_csv(ROOT / "data" / "breast.csv", "class", drop_columns=("id",))
        tr, te = holdout_split(ds, 2 / 3, 0)
        assert abs(len(tr) - 466) <= 1 and len(tr) + len(te) == 699


class TestRepresentationCases:
    def test_one_position_per_feature(self):
        rng = np.random.default_rng(0)
        rep = Representation(StructuredEncoder(7, 4, rng), 4, 3, rng)
        assert rep.encode(rng.normal(size=(2, 7)))[0].shape == (2, 7, 4)

    def test_sequence_positions(self):
        rng = np.random.default_rng(0)
        rep = Representation(SequenceEncoder(5, 6, rng), 6, 3, rng)
        enc, _ = rep.encode(rng.integers(0, 5, size=(1, 200)))
        assert enc.shape == (1, 200, 6)
        for vec in enc[0]:
            m = sum(vec) / len(vec)
            var = sum((t - m) ** 2 for t in vec) / len(vec)
            assert abs(m) < 1e-6 and abs(var - 1) < 1e-4


class TestPolicyCases:
    def test_state_layout(self):
        assert build_state(np.array([1.0, 2.0]), np.array([3.0]), np.array([4.0])).tolist() == [1, 2, 3, 4]
        rng = np.random.default_rng(0)
        rep = Representation(StructuredEncoder(3, 2, rng), 2, 4, rng)
        policy = PolicyNet(2 + 8, 3, rng)
        enc, _ = rep.encode(rng.normal(size=(1, 3)))
        traj = rollout(policy, rep, enc, mode="test")
        assert traj.states.shape[-1] == 10
        np.testing.assert_array_equal(traj.states[0, 0], np.concatenate([enc[0, 0], np.zeros(8)]))

    def test_zero_output_layer_gives_half(self):
        policy = PolicyNet(4, 3, np.random.default_rng(0))
        policy.fc2.params["W"][...] = 0.0
        policy.fc2.params["b"][...] = 0.0
        np.testing.assert_array_equal(policy.forward(np.random.default_rng(1).normal(size=(5, 4)))[0], 0.5)

    def test_probability_open_interval(self):
        policy = PolicyNet(4, 3, np.random.default_rng(0))
        p, _ = policy.forward(np.random.default_rng(1).normal(scale=5, size=(100, 4)))
        assert np.all((p > 0) & (p < 1))

    def test_log_prob_definition(self):
        p, a = np.array([0.2, 0.9]), np.array([1, 0])
        np.testing.assert_allclose(log_prob(p, a), a * np.log(p) + (1 - a) * np.log(1 - p))

    def test_action_cases(self):
        assert select_action(np.array([0.99]), "test")[0] == 1
        assert select_action(np.array([0.01]), "test")[0] == 0
        a = select_action(np.full(100_000, 0.7), "train", np.random.default_rng(0))
        assert abs(a.mean() - 0.7) < 0.01

    @pytest.mark.parametrize("bias, kept", [(60.0, True), (-60.0, False)])
    def test_forced_policies(self, bias, kept):
        rng = np.random.default_rng(0)
        rep = Representation(StructuredEncoder(5, 3, rng), 3, 4, rng)
        policy = PolicyNet(11, 3, rng)
        policy.fc2.params["b"][...] = bias
        enc, _ = rep.encode(rng.normal(size=(2, 5)))
        traj = rollout(policy, rep, enc, mode="train", rng=rng)
        assert (traj.actions == int(kept)).all()
        if kept:
            np.testing.assert_array_equal(traj.trace.h_T, rep.run_masked_lstm(enc, np.ones((2, 5), bool)).h_T)
        else:
            assert not traj.trace.h_T.any() and traj.n_discarded.tolist() == [5, 5]

    def test_reward_cases(self):
        assert reward_A(np.array([0.9, 0.1]), 0, 2)[0] == 1.0
        assert reward_A(np.array([0.5, 0.5]), 0, 1)[0] == pytest.approx(-0.6931, abs=1e-4)
        assert reward_A(np.array([1.0, 0.0]), 0, 0)[0] == 0.0
        assert reward_B(10, 4, 1.0) == pytest.approx(0.4)
        assert reward_B(10, 0, 0.3) == 0.0
        assert reward_B(10, 10, 0.3) == pytest.approx(0.3)
        assert total_reward(1.0, 0.4) == pytest.approx(1.4)
        assert reward_B(10, 7, 0.0) == 0.0
        assert np.all(np.diff(reward_B(10, np.arange(11), 0.5)) >= 0)


class TestClassifierCases:
    def test_zero_head_is_uniform(self):
        clf = Classifier(4, 3, None)
        np.testing.assert_allclose(clf.forward(np.random.default_rng(0).normal(size=(2, 4)))[0], 1 / 3)
        clf2 = Classifier(4, 2, None)
        np.testing.assert_array_equal(clf2.forward(np.ones(4))[0], [0.5, 0.5])

    def test_loss_cases(self):
        assert classifier_loss(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([0, 1])) == 0.0
        assert classifier_loss(np.full((2, 2), 0.5), np.array([0, 1])) == pytest.approx(2 * math.log(2))

    def test_prediction_cases(self):
        assert predict_label(np.array([0.2, 0.7, 0.1])) == 1
        assert predict_label(np.array([0.5, 0.5])) == 0
        p = np.random.default_rng(0).random((20, 4))
        np.testing.assert_array_equal(predict_label(p), predict_label(np.exp(3 * p) + 1))


class TestMetricCases:
    def test_confusion_cases(self):
        y = np.array([1, 1, 1, 0, 0, 0])
        c = confusion(y, y)
        assert (c.s_minus_of_plus, c.s_plus_of_minus) == (0, 0)
        c = confusion(1 - y, y)
        assert (c.s_minus_of_plus, c.s_plus_of_minus) == (3, 3)

    def test_rate_cases(self):
        perfect = ConfusionCounts(4, 4, 0, 0)
        wrong = ConfusionCounts(4, 4, 4, 4)
        assert acc(perfect) == 1.0 and acc(wrong) == 0.0
        assert sn(ConfusionCounts(5, 5, 0, 2)) == 1.0
        assert sp(ConfusionCounts(5, 5, 1, 5)) == 0.0
        assert mcc_eq4(perfect) == 1.0 and mcc_standard(perfect) == 1.0

    def test_random_predictions_have_no_correlation(self):
        rng = np.random.default_rng(0)
        y = rng.integers(0, 2, 10_000)
        p = rng.integers(0, 2, 10_000)
        assert abs(mcc_standard(confusion(p, y))) < 0.05

    def test_overall_accuracy_cases(self):
        assert overall_accuracy(np.array([0, 1, 2]), np.array([0, 1, 2])) == 1.0
        assert overall_accuracy(np.array([0, 1, 2, 2]), np.array([0, 2, 1, 2]), 3) == 0.5


class TestTrainingCases:
    @pytest.fixture
    def toy(self):
        ds = separable_table(200, 8, seed=3)
        model = GatedReducer.build(ds, np.random.default_rng(0), 16, 16, 8)
        return ds, model, model.prepare(ds)

    def test_zero_epochs_change_nothing(self, toy):
        _, model, batch = toy
        before = model.snapshot()
        cfg = TrainConfig(phase1_epochs=0, phase2_epochs=0, phase3_epochs=0)
        phase1_pretrain(model, batch, cfg, np.random.default_rng(0))
        phase2_rl(model, batch, cfg, np.random.default_rng(0), np.random.default_rng(1))
        phase3_finetune(model, batch, cfg, np.random.default_rng(0), np.random.default_rng(1))
        after = model.snapshot()
        for g in before:
            for k in before[g]:
                np.testing.assert_array_equal(before[g][k], after[g][k])

    def test_separable_pretraining(self):
        ds = separable_table(200, 8, seed=3)
        model = GatedReducer.build(ds, np.random.default_rng(0), 32, 64, 32)
        rep = phase1_pretrain(model, model.prepare(ds), TrainConfig(phase1_epochs=200), np.random.default_rng(0))
        assert rep.train_acc >= 0.95

    def test_full_batch_loss_is_monotone(self):
        ds = separable_table(200, 8, seed=3)
        model = GatedReducer.build(ds, np.random.default_rng(0), 32, 64, 32)
        cfg = TrainConfig(phase1_epochs=60, phase1_lr=0.01, batch_size=200)
        loss = phase1_pretrain(model, model.prepare(ds), cfg, np.random.default_rng(0)).history["loss"]
        assert all(b <= a + 1e-3 for a, b in zip(loss, loss[1:]))
        assert loss[-1] < loss[0]

    def test_strong_length_reward_sheds_inputs(self):
        ds = separable_table(200, 8, seed=3)
        cfg = TrainConfig(phase3_epochs=0, reward=RewardConfig(variant=2, eta=10.0))
        r2 = fit(ds, cfg).reports[1]
        assert r2.kept_fraction < r2.initial_kept_fraction

    def test_reward_ceiling_without_length_term(self):
        ds = separable_table(200, 8, seed=3)
        cfg = TrainConfig(phase2_epochs=100, phase2_lr=0.05, phase3_epochs=0,
                          reward=RewardConfig(variant=2, eta=0.0))
        r1, r2, _ = fit(ds, cfg).reports
        assert r1.train_acc == 1.0
        rewards = r2.history["mean_reward"]
        assert np.mean(rewards[-10:]) >= 0.98 > rewards[0]

    def test_skipping_phase3_keeps_phase2_model(self):
        ds = separable_table(80, 4, seed=2)
        small = dict(embed_dim=6, hidden_dim=8, policy_hidden=4, phase1_epochs=5, phase2_epochs=3)
        a = fit(ds, TrainConfig(**small, phase3_epochs=0))
        r = a.reports
        assert [x.phase for x in r] == [1, 2, 3]
        assert r[2].train_acc == r[1].train_acc and r[2].mask_kept_fraction == r[1].mask_kept_fraction


class TestCommandCases:
    def test_missing_label_column_names_it(self, tmp_path, capsys):
        p = tmp_path / "t.csv"
        write_csv(separable_table(30, 3, seed=0), p)
        code = cli.main(["train", "--set", f"data.path={p}", "--set", "data.label_column=target",
                         "--out", str(tmp_path / "o")])
        assert code == 2 and "'target'" in capsys.readouterr().err

    def test_supervised_only_run(self, tmp_path, capsys):
        p = tmp_path / "t.csv"
        write_csv(separable_table(60, 3, seed=0), p)
        out = tmp_path / "o"
        code = cli.main(["train", "--set", f"data.path={p}", "--set", "data.label_column=label",
                         "--set", "data.test_fraction=0", "--phase1-epochs", "100", "--phase2-epochs", "0",
                         "--phase3-epochs", "0", "--out", str(out)])
        assert code == 0
        rows = (out / "phases.csv").read_text().splitlines()
        assert rows[2].split(",")[4] == ""  # no phase-2 reward
        ev = tmp_path / "e.json"
        assert cli.main(["evaluate", "--model", str(out / "model.grm"), "--data", str(p), "--out", str(ev)]) == 0

        assert json.loads(ev.read_text())["metrics"]["overall_acc"] == 1.0

    def test_unseen_kmers_map_to_unknown(self, tmp_path):
        train = SequenceDataset(["AAAA", "CCCC", "AACC", "CCAA"], np.array([0, 1, 0, 1]), list("abcd"))
        test = SequenceDataset(["GGGG", "ACGT"], np.array([0, 1]), ["x", "y"])
        model = GatedReducer.build(train, np.random.default_rng(0), 4, 4, 3, k=2)
        batch = model.prepare(test)
        assert batch.inputs[0].tolist() == [0, 0, 0]
        assert np.all(np.isfinite(model.predict_proba(batch)[0]))

    def test_mask_file_reload_applies_same_mask(self, tmp_path, capsys):
        p = tmp_path / "t.csv"
        write_csv(separable_table(60, 4, seed=0), p)
        out = tmp_path / "o"
        assert cli.main(["train", "--set", f"data.path={p}", "--set", "data.label_column=label",
                         "--phase1-epochs", "10", "--phase2-epochs", "3", "--phase3-epochs", "2",
                         "--out", str(out)]) == 0

        e1, e2 = tmp_path / "e1.json", tmp_path / "e2.json"
        base = ["evaluate", "--model", str(out / "model.grm"), "--data", str(p)]
        assert cli.main(base + ["--out", str(e1)]) == 0
        assert cli.main(base + ["--mask", str(out / "mask.tsv"), "--out", str(e2)]) == 0
        assert json.loads(e1.read_text())["predictions"] == json.loads(e2.read_text())["predictions"]


@pytest.mark.slow
class TestBreastRuns:
    def test_config_file_run_is_reproducible_and_keeps_accuracy(self, tmp_path, capsys):
        args = ["train", "--config", str(ROOT / "configs" / "breast.cfg"), "--seed", "75"]
        assert cli.main(args + ["--out", str(tmp_path / "a")]) == 0
        assert cli.main(args + ["--out", str(tmp_path / "b")]) == 0
        a = (tmp_path / "a" / "manifest.json").read_bytes()
        assert a == (tmp_path / "b" / "manifest.json").read_bytes()

        phases = json.loads(a)["phases"]
        assert phases[2]["test_acc"] >= phases[0]["test_acc"] - 0.02
