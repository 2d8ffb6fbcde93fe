"""Dataset tests: synthetic construction invariants, file round-trips,
tokenization, and stratified batching."""

import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression

from paircl.data import (
    FILLER_ID,
    LABEL_TO_ID,
    NEG_ID,
    SynthConfig,
    _content_halves,
    build_vocab,
    generate,
    labels_of,
    load_file,
    make_batches,
    records_to_examples,
    save_file,
    tokenize,
)
from paircl.errors import ConfigError, DataFormatError


def _small_config(**kw):
    base = dict(vocab_size=60, n_train=120, n_dev=30, n_test=30, seed=0)
    base.update(kw)
    return SynthConfig(**base)


class TestGenerate:
    def test_same_seed_byte_identical(self, tmp_path):
        a = generate(_small_config(seed=5))
        b = generate(_small_config(seed=5))
        pa, pb = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        save_file(a[0], pa)
        save_file(b[0], pb)
        assert pa.read_bytes() == pb.read_bytes()

    def test_different_seed_differs(self):
        a, _, _ = generate(_small_config(seed=1))
        b, _, _ = generate(_small_config(seed=2))
        assert any(not np.array_equal(x.premise.ids, y.premise.ids)
                   for x, y in zip(a, b))

    def test_entailment_multiset_subset(self):
        """Hypothesis tokens minus the filler are a multiset subset of the
        premise tokens, across the whole split."""
        train, _, _ = generate(_small_config(n_train=300))
        checked = 0
        for ex in train:
            if ex.label != LABEL_TO_ID["entailment"]:
                continue
            checked += 1
            remaining = list(ex.premise.tokens)
            for tok in ex.hypothesis.tokens:
                if tok == FILLER_ID:
                    continue
                assert tok in remaining, f"{tok} not in premise {remaining}"
                remaining.remove(tok)
        assert checked == 100

    def test_contradiction_structure(self):
        """Hypothesis contains NEG immediately followed by a premise token;
        its remaining tokens come from the half disjoint from premises."""
        cfg = _small_config(n_train=300)
        half_a, half_b = _content_halves(cfg.vocab_size)
        train, _, _ = generate(cfg)
        for ex in train:
            if ex.label != LABEL_TO_ID["contradiction"]:
                continue
            hyp = ex.hypothesis.tokens.tolist()
            assert NEG_ID in hyp
            at = hyp.index(NEG_ID)
            assert at + 1 < len(hyp)
            assert hyp[at + 1] in ex.premise.tokens
            rest = hyp[:at] + hyp[at + 2:]
            assert all(tok in half_b for tok in rest)

    def test_neutral_overlap_bounded(self):
        train, _, _ = generate(_small_config(n_train=300))
        for ex in train:
            if ex.label != LABEL_TO_ID["neutral"]:
                continue
            premise = set(ex.premise.tokens.tolist())
            hyp = ex.hypothesis.tokens.tolist()
            overlap = sum(t in premise for t in hyp) / len(hyp)
            assert overlap <= 0.3

    def test_class_balance_exact(self):
        for n in (120, 121, 122):
            train, dev, test = generate(_small_config(n_train=n))
            counts = np.bincount(labels_of(train), minlength=3)
            assert counts.sum() == n
            assert counts.max() - counts.min() <= 1

    def test_splits_disjoint(self):
        train, dev, test = generate(_small_config())
        def keys(split):
            return {(tuple(ex.premise.tokens), tuple(ex.hypothesis.tokens))
                    for ex in split}
        kt, kd, ks = keys(train), keys(dev), keys(test)
        assert kt.isdisjoint(kd) and kt.isdisjoint(ks) and kd.isdisjoint(ks)
        assert len(kt) == len(train)

    def test_token_ids_within_vocab(self):
        cfg = _small_config()
        for split in generate(cfg):
            for ex in split:
                assert ex.premise.tokens.max() < cfg.vocab_size
                assert ex.hypothesis.tokens.max() < cfg.vocab_size
                assert ex.premise.tokens.min() >= 1

    def test_infeasible_configs_rejected(self):
        with pytest.raises(ConfigError):
            _small_config(vocab_size=5).validate()
        with pytest.raises(ConfigError):
            _small_config(n_train=0).validate()
        with pytest.raises(ConfigError):
            _small_config(premise_len=(5, 4)).validate()
        with pytest.raises(ConfigError):
            _small_config(max_len=6, premise_len=(4, 12)).validate()

    def test_linear_probe_separates_entailment_from_contradiction(self):
        """Oracle run: bag-of-token overlap features + logistic regression
        reach > 90% dev accuracy on the entailment/contradiction subtask
        (seed 7, full-size config; observed 1.00)."""
        train, dev, _ = generate(SynthConfig(seed=7))

        def feats(ex):
            premise = set(ex.premise.tokens.tolist())
            hyp = ex.hypothesis.tokens.tolist()
            hyp_in_prem = sum(t in premise for t in hyp) / len(hyp)
            hyp_set = set(hyp)
            prem_in_hyp = sum(t in hyp_set for t in ex.premise.tokens.tolist()) \
                / ex.premise.length
            return [hyp_in_prem, prem_in_hyp]

        def subtask(split):
            X = [feats(ex) for ex in split if ex.label in (0, 1)]
            y = [ex.label for ex in split if ex.label in (0, 1)]
            return X, y

        probe = LogisticRegression().fit(*subtask(train))
        assert probe.score(*subtask(dev)) > 0.90


class TestFileFormats:
    def test_jsonl_round_trip_exact(self, tmp_path):
        train, _, _ = generate(_small_config(n_train=12, n_dev=3, n_test=3))
        path = tmp_path / "split.jsonl"
        save_file(train, path)
        records, skipped = load_file(path, "jsonl")
        assert skipped == 0
        back = records_to_examples(records, max_len=24)
        assert len(back) == len(train)
        for a, b in zip(train, back):
            assert a.label == b.label
            np.testing.assert_array_equal(a.premise.tokens, b.premise.tokens)
            np.testing.assert_array_equal(a.hypothesis.tokens, b.hypothesis.tokens)
        # second save is byte-identical
        path2 = tmp_path / "again.jsonl"
        save_file(back, path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_two_line_fixture_round_trip(self, tmp_path):
        path = tmp_path / "two.jsonl"
        path.write_text(
            '{"premise": [4, 5, 6], "hypothesis": [5, 4], "label": "entailment"}\n'
            '{"sentence1": [9, 8], "sentence2": [1, 9, 30], "gold_label": "contradiction"}\n')
        records, skipped = load_file(path, "jsonl")
        assert skipped == 0
        assert [r.label for r in records] == [0, 1]
        out = tmp_path / "copy.jsonl"
        save_file(records, out)
        again, _ = load_file(out, "jsonl")
        assert [(r.premise, r.hypothesis, r.label) for r in again] == \
               [(r.premise, r.hypothesis, r.label) for r in records]

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        records, skipped = load_file(path, "jsonl")
        assert records == [] and skipped == 0

    def test_unannotated_marker_skipped_and_counted(self, tmp_path):
        path = tmp_path / "mixed.jsonl"
        path.write_text(
            '{"premise": "a b", "hypothesis": "c", "label": "-"}\n'
            '{"premise": "a b", "hypothesis": "b", "label": "entailment"}\n')
        records, skipped = load_file(path, "jsonl")
        assert skipped == 1
        assert len(records) == 1

    def test_unknown_label_names_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(
            '{"premise": "a", "hypothesis": "b", "label": "entailment"}\n'
            '{"premise": "a", "hypothesis": "b", "label": "maybe"}\n')
        with pytest.raises(DataFormatError, match=":2"):
            load_file(path, "jsonl")

    def test_malformed_json_names_line(self, tmp_path):
        path = tmp_path / "broken.jsonl"
        path.write_text('{"premise": "a"\n')
        with pytest.raises(DataFormatError, match=":1"):
            load_file(path, "jsonl")

    def test_tsv_round_trip_text(self, tmp_path):
        path = tmp_path / "pairs.tsv"
        path.write_text("a man sleeps\ta person rests\tentailment\n"
                        "a man sleeps\tnobody is here\tcontradiction\n")
        records, skipped = load_file(path, "tsv")
        assert skipped == 0
        assert records[0].premise == "a man sleeps"
        out = tmp_path / "copy.tsv"
        save_file(records, out, "tsv")
        assert out.read_text() == path.read_text()

    def test_tsv_field_count_error(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("only\ttwo\n")
        with pytest.raises(DataFormatError, match=":1"):
            load_file(path, "tsv")

    def test_unknown_format_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            load_file(tmp_path / "x.csv", "csv")


class TestTokenize:
    def test_repeated_token_same_id(self):
        vocab = build_vocab(["a a a"], max_size=10)
        seq = tokenize("A a  a", vocab, max_len=6)
        assert seq.length == 3
        assert len(set(seq.tokens.tolist())) == 1

    def test_unknown_token_maps_to_unk(self):
        vocab = build_vocab(["known words here"], max_size=10)
        seq = tokenize("unknownword", vocab, max_len=4)
        assert seq.tokens.tolist() == [1]

    def test_vocab_frequency_then_lexicographic(self):
        """Two docs, cap 5: top tokens by count, ties broken alphabetically.
        Counts: b:3, a:2, c:2, d:1, e:1, f:1 -> ids: b=2, a=3, c=4."""
        vocab = build_vocab(["b a c d b", "b a c e f"], max_size=5)
        assert vocab["<pad>"] == 0 and vocab["<unk>"] == 1
        assert vocab["b"] == 2 and vocab["a"] == 3 and vocab["c"] == 4
        assert len(vocab) == 5
        assert "d" not in vocab

    def test_build_vocab_deterministic(self):
        corpus = ["x y z x", "z w y"]
        assert build_vocab(corpus, 8) == build_vocab(list(corpus), 8)


class TestMakeBatches:
    def _split(self, n=60, seed=0):
        cfg = _small_config(n_train=n, n_dev=3, n_test=3, seed=seed)
        return generate(cfg)[0]

    def test_full_split_single_batch_is_permutation(self):
        split = self._split(30)
        batches = make_batches(split, batch_size=30, seed=1)
        assert len(batches) == 1
        def key(ex):
            return (tuple(ex.premise.tokens), tuple(ex.hypothesis.tokens), ex.label)
        assert sorted(map(key, batches[0])) == sorted(map(key, split))

    def test_stratified_batches_cover_every_class(self):
        split = self._split(60)
        for batch in make_batches(split, batch_size=12, seed=3, stratify=True):
            counts = np.bincount(labels_of(batch), minlength=3)
            assert (counts >= 2).all()
            assert len(batch) == 12

    def test_same_seed_identical_order(self):
        split = self._split(48)
        a = make_batches(split, batch_size=12, seed=9)
        b = make_batches(split, batch_size=12, seed=9)
        for ba, bb in zip(a, b):
            for xa, xb in zip(ba, bb):
                assert xa is xb

    def test_different_epoch_seeds_differ(self):
        split = self._split(48)
        a = make_batches(split, batch_size=12, seed=np.random.SeedSequence([0, 0]))
        b = make_batches(split, batch_size=12, seed=np.random.SeedSequence([0, 1]))
        assert any(xa is not xb for ba, bb in zip(a, b) for xa, xb in zip(ba, bb))

    def test_short_tail_dropped(self):
        split = self._split(50)
        batches = make_batches(split, batch_size=12, seed=0)
        assert len(batches) == 4
        assert all(len(b) == 12 for b in batches)

    def test_stratify_infeasible_batch_size(self):
        split = self._split(30)
        with pytest.raises(ConfigError):
            make_batches(split, batch_size=4, seed=0, stratify=True)

    def test_stratify_infeasible_class_support(self):
        split = [ex for ex in self._split(60) if ex.label != 2][:20]
        split += [ex for ex in self._split(60) if ex.label == 2][:1]
        with pytest.raises(ConfigError):
            make_batches(split, batch_size=7, seed=0, stratify=True)

    def test_batch_size_below_two_rejected(self):
        with pytest.raises(ConfigError):
            make_batches(self._split(30), batch_size=1, seed=0)
