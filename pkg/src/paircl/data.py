"""Synthetic premise/hypothesis datasets and file-based ingestion.

The synthetic task is label-exact by construction:

  * entailment     — the hypothesis is a sampled subset of the premise's
                     tokens, optionally with one generic filler token.
  * contradiction  — the hypothesis contains the NEG marker immediately
                     followed by a premise token; its remaining tokens come
                     from a vocabulary half disjoint from premise vocabulary.
  * neutral        — the hypothesis is drawn independently and resampled
                     until at most 30% of its tokens occur in the premise.

Token id conventions: PAD = 0 always. In synthetic vocabularies NEG = 1 and
FILLER = 2, premises draw from the lower content half, ids 3 and up. In text
vocabularies built by ``build_vocab``, UNK = 1 and real tokens start at 2.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .encoder import PAD_ID, TokenSeq
from .errors import ConfigError, DataFormatError, DegenerateInputError

NEG_ID = 1
FILLER_ID = 2
UNK_ID = 1

LABEL_NAMES = ("entailment", "contradiction", "neutral")
LABEL_TO_ID = {name: i for i, name in enumerate(LABEL_NAMES)}
N_CLASSES = len(LABEL_NAMES)


@dataclass(frozen=True)
class Example:
    premise: TokenSeq
    hypothesis: TokenSeq
    label: int

    def __post_init__(self):
        if not 0 <= self.label < N_CLASSES:
            raise ConfigError(f"Example: label {self.label} out of range")


@dataclass(frozen=True)
class SynthConfig:
    vocab_size: int = 200
    n_train: int = 3000
    n_dev: int = 600
    n_test: int = 600
    premise_len: tuple[int, int] = (4, 12)
    hypothesis_len: tuple[int, int] = (3, 8)
    max_len: int = 24
    seed: int = 0
    negation_id: int = NEG_ID
    class_balance: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)

    def validate(self) -> None:
        if min(self.n_train, self.n_dev, self.n_test) < 1:
            raise ConfigError("SynthConfig: split sizes must be >= 1")
        for lo, hi in (self.premise_len, self.hypothesis_len):
            if lo < 1 or hi < lo:
                raise ConfigError(f"SynthConfig: bad length range ({lo}, {hi})")
        if self.hypothesis_len[0] > self.premise_len[0]:
            raise ConfigError(
                "SynthConfig: min hypothesis length may not exceed min premise length "
                "(entailment hypotheses are premise subsets)")
        if self.hypothesis_len[1] < 2:
            raise ConfigError(
                "SynthConfig: contradictions need hypotheses of length >= 2")
        # PAD, NEG, FILLER plus at least two content tokens per half
        if self.vocab_size < FILLER_ID + 1 + 4:
            raise ConfigError(
                f"SynthConfig: vocab_size {self.vocab_size} too small for two "
                "disjoint content halves")
        if max(self.premise_len[1], self.hypothesis_len[1]) > self.max_len:
            raise ConfigError("SynthConfig: max_len shorter than longest sentence")
        if abs(sum(self.class_balance) - 1.0) > 1e-9 or min(self.class_balance) < 0:
            raise ConfigError("SynthConfig: class_balance must be a distribution")


def _exact_class_counts(n: int, balance) -> list[int]:
    """Integer class counts summing to n; remainders go to the lowest ids."""
    counts = [int(np.floor(n * b)) for b in balance]
    for i in range(n - sum(counts)):
        counts[i % len(counts)] += 1
    return counts


def _content_halves(vocab_size: int):
    content = np.arange(FILLER_ID + 1, vocab_size)
    mid = content.size // 2
    return content[:mid], content[mid:]


class _PairFactory:
    """Draws labeled premise/hypothesis pairs from one seeded stream."""

    def __init__(self, cfg: SynthConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.half_a, self.half_b = _content_halves(cfg.vocab_size)
        self.seen: set[tuple] = set()

    def _lengths(self):
        lo_p, hi_p = self.cfg.premise_len
        lo_h, hi_h = self.cfg.hypothesis_len
        return (int(self.rng.integers(lo_p, hi_p + 1)),
                int(self.rng.integers(lo_h, hi_h + 1)))

    def _premise(self, m: int) -> np.ndarray:
        return self.rng.choice(self.half_a, size=m, replace=True)

    def _entailment(self, premise: np.ndarray, n: int) -> list[int]:
        n = min(n, premise.size)
        picks = self.rng.choice(premise.size, size=n, replace=False)
        hyp = list(premise[picks])
        if self.rng.random() < 0.5 and len(hyp) < self.cfg.hypothesis_len[1]:
            hyp.insert(int(self.rng.integers(0, len(hyp) + 1)), FILLER_ID)
        return hyp

    def _contradiction(self, premise: np.ndarray, n: int) -> list[int]:
        n = max(n, 2)
        extra = list(self.rng.choice(self.half_b, size=n - 2, replace=True))
        at = int(self.rng.integers(0, len(extra) + 1))
        marker = [self.cfg.negation_id, int(self.rng.choice(premise))]
        return extra[:at] + marker + extra[at:]

    def _neutral(self, premise: np.ndarray, n: int) -> list[int]:
        pool = np.concatenate([self.half_a, self.half_b])
        premise_set = set(premise.tolist())
        for _ in range(1000):
            hyp = self.rng.choice(pool, size=n, replace=True)
            overlap = sum(t in premise_set for t in hyp.tolist()) / n
            if overlap <= 0.3:
                return list(hyp)
        raise ConfigError("generate: could not sample a low-overlap neutral "
                          "hypothesis; vocabulary too small")

    def draw(self, label: int) -> Example:
        for _ in range(1000):
            m, n = self._lengths()
            premise = self._premise(m)
            if label == LABEL_TO_ID["entailment"]:
                hyp = self._entailment(premise, n)
            elif label == LABEL_TO_ID["contradiction"]:
                hyp = self._contradiction(premise, n)
            else:
                hyp = self._neutral(premise, n)
            key = (tuple(premise.tolist()), tuple(hyp))
            if key in self.seen:
                continue
            self.seen.add(key)
            return Example(
                premise=TokenSeq.from_ids(premise.tolist(), self.cfg.max_len),
                hypothesis=TokenSeq.from_ids(hyp, self.cfg.max_len),
                label=label,
            )
        raise ConfigError("generate: exhausted retries drawing distinct pairs; "
                          "increase the vocabulary or shrink the splits")


def generate(cfg: SynthConfig):
    """Deterministically generate (train, dev, test) splits.

    All three splits come from one seeded stream and are pairwise disjoint;
    per-split label counts match the configured class balance exactly.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    factory = _PairFactory(cfg, rng)

    splits = []
    for n in (cfg.n_train, cfg.n_dev, cfg.n_test):
        labels = np.repeat(np.arange(N_CLASSES),
                           _exact_class_counts(n, cfg.class_balance))
        rng.shuffle(labels)
        splits.append([factory.draw(int(y)) for y in labels])
    return tuple(splits)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

_PREMISE_KEYS = ("premise", "sentence1")
_HYPOTHESIS_KEYS = ("hypothesis", "sentence2")
_LABEL_KEYS = ("label", "gold_label")


@dataclass(frozen=True)
class RawRecord:
    """One parsed data row; sentences are either text or token-id lists."""

    premise: object
    hypothesis: object
    label: int


def _pick(obj: dict, keys, path: str, line_no: int):
    for key in keys:
        if key in obj:
            return obj[key]
    raise DataFormatError(f"{path}:{line_no}: missing any of {keys}")


def _map_label(raw, path: str, line_no: int):
    """Returns a class id, or None for the unannotated '-' marker."""
    if isinstance(raw, int) and 0 <= raw < N_CLASSES:
        return raw
    if isinstance(raw, str):
        name = raw.strip().lower()
        if name == "-":
            return None
        if name in LABEL_TO_ID:
            return LABEL_TO_ID[name]
        if name.isdigit() and 0 <= int(name) < N_CLASSES:
            return int(name)
    raise DataFormatError(f"{path}:{line_no}: unknown label {raw!r}")


def load_file(path, fmt: str = "jsonl"):
    """Parse a JSONL or TSV data file.

    Returns (records, n_skipped) where skipped rows are those carrying the
    unannotated label marker '-'.
    """
    if fmt not in ("jsonl", "tsv"):
        raise ConfigError(f"load_file: unknown format {fmt!r}")
    records: list[RawRecord] = []
    skipped = 0
    path = str(path)
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if fmt == "jsonl":
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DataFormatError(f"{path}:{line_no}: bad JSON ({exc})") from exc
                premise = _pick(obj, _PREMISE_KEYS, path, line_no)
                hypothesis = _pick(obj, _HYPOTHESIS_KEYS, path, line_no)
                label = _map_label(_pick(obj, _LABEL_KEYS, path, line_no), path, line_no)
            else:
                parts = line.split("\t")
                if len(parts) != 3:
                    raise DataFormatError(
                        f"{path}:{line_no}: expected 3 tab-separated fields, got {len(parts)}")
                premise, hypothesis = parts[0], parts[1]
                label = _map_label(parts[2], path, line_no)
            if label is None:
                skipped += 1
                continue
            records.append(RawRecord(premise=premise, hypothesis=hypothesis, label=label))
    return records, skipped


def save_file(examples, path, fmt: str = "jsonl") -> None:
    """Persist examples (or RawRecords). JSONL keeps token ids as arrays;
    TSV space-joins tokens into text fields."""
    if fmt not in ("jsonl", "tsv"):
        raise ConfigError(f"save_file: unknown format {fmt!r}")
    with open(str(path), "w", encoding="utf-8") as fh:
        for ex in examples:
            if isinstance(ex, Example):
                premise = ex.premise.tokens.tolist()
                hypothesis = ex.hypothesis.tokens.tolist()
                label = ex.label
            else:
                premise, hypothesis, label = ex.premise, ex.hypothesis, ex.label
            if fmt == "jsonl":
                fh.write(json.dumps({
                    "premise": premise,
                    "hypothesis": hypothesis,
                    "label": LABEL_NAMES[label],
                }) + "\n")
            else:
                p = premise if isinstance(premise, str) else " ".join(map(str, premise))
                h = hypothesis if isinstance(hypothesis, str) else " ".join(map(str, hypothesis))
                fh.write(f"{p}\t{h}\t{LABEL_NAMES[label]}\n")


def records_to_examples(records, max_len: int, vocab: dict | None = None):
    """Materialize RawRecords into Examples.

    Token-id lists are taken as-is; text fields require a vocabulary and go
    through ``tokenize``. Sentences longer than ``max_len`` are truncated.
    """
    out = []
    for rec in records:
        sides = []
        for side in (rec.premise, rec.hypothesis):
            if isinstance(side, str):
                if vocab is None:
                    raise ConfigError(
                        "records_to_examples: text records need a vocabulary")
                sides.append(tokenize(side, vocab, max_len))
            else:
                ids = list(side)[:max_len]
                sides.append(TokenSeq.from_ids(ids, max_len))
        out.append(Example(premise=sides[0], hypothesis=sides[1], label=rec.label))
    return out


# ---------------------------------------------------------------------------
# text tokenization
# ---------------------------------------------------------------------------

def build_vocab(corpus, max_size: int) -> dict[str, int]:
    """Whitespace/lowercase vocabulary: PAD = 0, UNK = 1, then tokens by
    descending frequency with lexicographic tie-break."""
    if max_size < 3:
        raise ConfigError(f"build_vocab: max_size {max_size} leaves no room for tokens")
    counts: dict[str, int] = {}
    for text in corpus:
        for tok in text.lower().split():
            counts[tok] = counts.get(tok, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    vocab = {"<pad>": PAD_ID, "<unk>": UNK_ID}
    for tok, _ in ranked[: max_size - 2]:
        vocab[tok] = len(vocab)
    return vocab


def tokenize(text: str, vocab: dict[str, int], max_len: int) -> TokenSeq:
    """Lowercased whitespace tokens mapped through the vocabulary; unknown
    tokens become UNK. Truncates to ``max_len``."""
    ids = [vocab.get(tok, UNK_ID) for tok in text.lower().split()]
    if not ids:
        raise DegenerateInputError(f"tokenize: no tokens in {text!r}")
    return TokenSeq.from_ids(ids[:max_len], max_len)


# ---------------------------------------------------------------------------
# batching
# ---------------------------------------------------------------------------

def make_batches(split, batch_size: int, seed: int, stratify: bool = True):
    """One epoch's batches as lists of examples, seeded shuffle.

    With ``stratify`` each batch carries at least 2 examples of every class
    in the split, so contrastive positive sets are never empty. Incomplete
    trailing batches are dropped.
    """
    if batch_size < 2:
        raise ConfigError(f"make_batches: batch size {batch_size} < 2")
    n_batches = len(split) // batch_size
    if n_batches == 0:
        return []
    rng = np.random.default_rng(seed)

    if not stratify:
        order = rng.permutation(len(split))
        return [[split[i] for i in order[b * batch_size:(b + 1) * batch_size]]
                for b in range(n_batches)]

    classes = sorted({ex.label for ex in split})
    if batch_size < 2 * len(classes):
        raise ConfigError(
            f"make_batches: batch size {batch_size} cannot hold 2 examples of "
            f"each of {len(classes)} classes")
    by_class = {c: [i for i, ex in enumerate(split) if ex.label == c] for c in classes}
    for c in classes:
        if len(by_class[c]) < 2 * n_batches:
            raise ConfigError(
                f"make_batches: class {c} has {len(by_class[c])} examples, "
                f"needs {2 * n_batches} to stratify {n_batches} batches")
        rng.shuffle(by_class[c])

    batches = [[] for _ in range(n_batches)]
    for c in classes:
        queue = by_class[c]
        for b in range(n_batches):
            batches[b].extend(queue[2 * b:2 * b + 2])
        by_class[c] = queue[2 * n_batches:]

    pool = [i for c in classes for i in by_class[c]]
    rng.shuffle(pool)
    cursor = 0
    for b in range(n_batches):
        want = batch_size - len(batches[b])
        batches[b].extend(pool[cursor:cursor + want])
        cursor += want
    out = []
    for b in range(n_batches):
        idx = np.array(batches[b])
        rng.shuffle(idx)
        out.append([split[i] for i in idx])
    return out


def labels_of(split) -> np.ndarray:
    return np.array([ex.label for ex in split], dtype=np.int64)
