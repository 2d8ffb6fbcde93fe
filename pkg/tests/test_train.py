"""Training-loop tests: determinism, checkpoint round-trips, resume
equivalence, ablation wiring, and report bookkeeping."""

import json
import warnings

import numpy as np
import pytest

from paircl.data import SynthConfig, generate
from paircl.errors import CheckpointError, ConfigError, TrainingDivergedError
from paircl.train import (
    PairModel,
    TrainConfig,
    ablation_variant,
    fit_linear_probe,
    load_checkpoint,
    model_from_checkpoint,
    restore_params,
    train,
)


@pytest.fixture(scope="module")
def small_splits():
    return generate(SynthConfig(vocab_size=60, n_train=120, n_dev=60,
                                n_test=60, seed=3))


def _small_config(**kw):
    base = dict(epochs=2, batch_size=12, vocab_size=60, k=6, seed=0)
    base.update(kw)
    return TrainConfig(**base)


class TestConfig:
    def test_contradictory_flags_rejected(self):
        with pytest.raises(ConfigError):
            _small_config(no_scl=True, no_ce=True).validate()

    def test_bad_values_rejected(self):
        for kw in (dict(epochs=-1), dict(batch_size=1), dict(tau=0.0),
                   dict(lr=0.0), dict(k=0)):
            with pytest.raises(ConfigError):
                _small_config(**kw).validate()

    def test_attn_dim_defaults_to_k(self):
        assert _small_config(k=9).attn_dim == 9
        assert _small_config(k=9, d=5).attn_dim == 5

    def test_round_trip_dict(self):
        cfg = _small_config(no_scl=True, d=4)
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg


class TestAblationVariant:
    def test_default_wiring(self):
        model = ablation_variant(_small_config())
        assert model.crossattn is not None
        assert model.rep_dim == 8 * 6

    def test_no_crossattn_narrows_rep(self):
        model = ablation_variant(_small_config(no_crossattn=True))
        assert model.crossattn is None
        assert model.rep_dim == 4 * 6
        assert model.classifier.in_dim == 4 * 6

    def test_all_flags_off_identical_to_default(self):
        a = ablation_variant(_small_config())
        b = ablation_variant(_small_config())
        for pa, pb in zip(a.params(), b.params()):
            np.testing.assert_array_equal(pa.value, pb.value)


class TestTrainLoop:
    def test_epochs_zero_reports_chance(self, small_splits):
        report, model = train(_small_config(epochs=0), small_splits)
        assert report.epochs == []
        assert abs(report.best_dev_acc - 1 / 3) < 0.25
        assert report.test_acc is not None

    def test_losses_differ_with_scl_flag(self, small_splits):
        full, _ = train(_small_config(epochs=1), small_splits)
        no_scl, _ = train(_small_config(epochs=1, no_scl=True), small_splits)
        assert full.epochs[0].l_total != no_scl.epochs[0].l_total
        assert no_scl.epochs[0].l_scl == 0.0

    def test_total_is_scl_plus_alpha_ce(self, small_splits):
        report, _ = train(_small_config(alpha=0.7), small_splits)
        for e in report.epochs:
            assert e.l_total == pytest.approx(e.l_scl + 0.7 * e.l_ce, rel=1e-12)

    def test_no_skipped_anchors_when_stratified(self, small_splits):
        report, _ = train(_small_config(), small_splits)
        assert all(e.skipped_anchors == 0 for e in report.epochs)

    def test_no_ce_uses_probe_for_accuracy(self, small_splits):
        report, model = train(_small_config(no_ce=True, epochs=1), small_splits)
        assert all(e.l_ce == 0.0 for e in report.epochs)
        # the returned model carries the post-hoc probe classifier
        assert model.accuracy(small_splits[2]) == report.test_acc

    def test_divergence_aborts_with_dump(self, small_splits):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            with pytest.raises(TrainingDivergedError) as err:
                train(_small_config(lr=1e150, epochs=3), small_splits)
        assert err.value.dump is not None
        assert "labels" in err.value.dump

    def test_deterministic_reports(self, small_splits):
        a, _ = train(_small_config(), small_splits)
        b, _ = train(_small_config(), small_splits)
        for ea, eb in zip(a.epochs, b.epochs):
            assert ea.l_total == eb.l_total
            assert ea.dev_acc == eb.dev_acc
        assert a.test_acc == b.test_acc


class TestArtifacts:
    def test_out_dir_files(self, small_splits, tmp_path):
        out = tmp_path / "run"
        report, _ = train(_small_config(), small_splits, out_dir=out)
        assert (out / "checkpoint.bin").exists()
        saved = json.loads((out / "report.json").read_text())
        assert saved["best_dev_acc"] == report.best_dev_acc
        lines = (out / "metrics.jsonl").read_text().splitlines()
        assert len(lines) == 2
        assert json.loads(lines[0])["epoch"] == 0
        csv = (out / "summary.csv").read_text().splitlines()
        assert csv[0] == "epoch,l_scl,l_ce,l_total,dev_acc"
        assert len(csv) == 3

    def test_bit_identical_checkpoints(self, small_splits, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        train(_small_config(), small_splits, out_dir=a)
        train(_small_config(), small_splits, out_dir=b)
        assert (a / "checkpoint.bin").read_bytes() == (b / "checkpoint.bin").read_bytes()

    def test_reports_identical_modulo_wall_time(self, small_splits, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        train(_small_config(), small_splits, out_dir=a)
        train(_small_config(), small_splits, out_dir=b)

        def strip(path):
            doc = json.loads((path / "report.json").read_text())
            doc.pop("total_wall_time")
            for e in doc["epochs"]:
                e.pop("wall_time")
            return doc

        assert strip(a) == strip(b)


class TestCheckpoint:
    def test_save_load_bitwise(self, small_splits, tmp_path):
        cfg = _small_config()
        report, model = train(cfg, small_splits, out_dir=tmp_path)
        state = load_checkpoint(tmp_path / "checkpoint.bin")
        assert state.config == cfg
        assert state.meta["best_dev_acc"] == report.best_dev_acc
        restored = model_from_checkpoint(state)
        for pa, pb in zip(model.params(), restored.params()):
            np.testing.assert_array_equal(pa.value, pb.value)

    def test_checkpoint_reproduces_test_accuracy(self, small_splits, tmp_path):
        report, _ = train(_small_config(), small_splits, out_dir=tmp_path)
        model = model_from_checkpoint(tmp_path / "checkpoint.bin")
        assert model.accuracy(small_splits[2]) == report.test_acc

    def test_wrong_width_names_tensor(self, small_splits, tmp_path):
        train(_small_config(), small_splits, out_dir=tmp_path)
        state = load_checkpoint(tmp_path / "checkpoint.bin")
        other = PairModel(_small_config(k=8))
        with pytest.raises(CheckpointError, match="encoder.token_table"):
            restore_params(other.params(), state.arrays, prefix="param/")

    def test_truncated_and_foreign_files_rejected(self, tmp_path):
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"not a checkpoint at all")
        with pytest.raises(CheckpointError):
            load_checkpoint(bad)

    def test_resume_matches_uninterrupted(self, small_splits, tmp_path):
        """Stop after 2 epochs, resume to 4: parameters match the
        uninterrupted 4-epoch run bit for bit."""
        part = tmp_path / "part"
        train(_small_config(epochs=2), small_splits, out_dir=part)
        resumed_report, resumed = train(_small_config(epochs=4), small_splits,
                                        resume_from=part / "checkpoint.bin")
        full_report, full = train(_small_config(epochs=4), small_splits)
        for pa, pb in zip(resumed.params(), full.params()):
            np.testing.assert_array_equal(pa.value, pb.value)
        assert resumed_report.test_acc == full_report.test_acc

    def test_resume_rejects_different_config(self, small_splits, tmp_path):
        train(_small_config(), small_splits, out_dir=tmp_path)
        with pytest.raises(CheckpointError):
            train(_small_config(k=8), small_splits,
                  resume_from=tmp_path / "checkpoint.bin")


class TestLinearProbe:
    def test_probe_learns_separable_data(self):
        rng = np.random.default_rng(0)
        centers = np.array([[2.0, 0.0], [-2.0, 0.0], [0.0, 2.0]])
        labels = rng.integers(0, 3, size=150)
        reps = centers[labels] + 0.3 * rng.normal(size=(150, 2))
        probe = fit_linear_probe(reps, labels, n_classes=3, seed=0)
        logits = reps @ probe.W_cls.value.T + probe.b_cls.value
        assert (logits.argmax(axis=1) == labels).mean() > 0.95

    def test_probe_deterministic(self):
        rng = np.random.default_rng(1)
        reps = rng.normal(size=(40, 4))
        labels = rng.integers(0, 2, size=40)
        a = fit_linear_probe(reps, labels, n_classes=2, seed=5)
        b = fit_linear_probe(reps, labels, n_classes=2, seed=5)
        np.testing.assert_array_equal(a.W_cls.value, b.W_cls.value)
