"""Corpora, tokenization, vocabulary, embeddings and synthetic data.

Corpus files are JSON lines with exactly the fields ``sentence``, ``aspect``
and ``label`` (``positive`` / ``negative`` / ``neutral``).
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

# positive/negative keep the same index in the 2- and 3-class label spaces
LABELS3 = ("positive", "negative", "neutral")
LABELS2 = ("positive", "negative")

PAD, UNK = 0, 1


class DataError(ValueError):
    pass


class CorpusParseError(DataError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


class LabelError(CorpusParseError):
    pass


class EmbeddingFormatError(DataError):
    pass


class ConfigError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercased maximal runs of alphanumeric characters."""
    tokens, current = [], []
    for ch in text.lower():
        if ch.isalnum():
            current.append(ch)
        elif current:
            tokens.append("".join(current))
            current = []
    if current:
        tokens.append("".join(current))
    return tokens


@dataclass(frozen=True)
class Example:
    sentence_tokens: tuple[str, ...]
    aspect_tokens: tuple[str, ...]
    label: str

    def __post_init__(self):
        if not self.sentence_tokens or not self.aspect_tokens:
            raise DataError("sentence and aspect must both have at least one token")
        if self.label not in LABELS3:
            raise DataError(f"unknown label {self.label!r}")

    @classmethod
    def from_text(cls, sentence: str, aspect: str, label: str) -> "Example":
        return cls(tuple(tokenize(sentence)), tuple(tokenize(aspect)), label)


@dataclass(frozen=True)
class Corpus:
    examples: tuple[Example, ...]
    labels: tuple[str, ...] = LABELS3
    task_kind: str = "term"
    name: str = ""
    skipped: int = 0

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    @property
    def num_classes(self) -> int:
        return len(self.labels)

    def label_ids(self) -> np.ndarray:
        return np.array([self.labels.index(e.label) for e in self.examples], dtype=np.intp)

    def subset(self, indices: Iterable[int], name: str | None = None) -> "Corpus":
        return Corpus(tuple(self.examples[i] for i in indices), self.labels,
                      self.task_kind, self.name if name is None else name)

    def label_counts(self) -> dict[str, int]:
        counts = Counter(e.label for e in self.examples)
        return {lab: counts.get(lab, 0) for lab in self.labels}


def parse_label(value, lineno: int) -> str:
    if value not in LABELS3:
        raise LabelError(lineno, f"unknown label {value!r}")
    return value


def load_corpus(path, task_kind: str = "term", binary: bool = False) -> Corpus:
    """Read a JSON-lines corpus; records that tokenize to nothing are skipped."""
    path = Path(path)
    examples, skipped = [], 0
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                sentence, aspect, label = rec["sentence"], rec["aspect"], rec["label"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorpusParseError(lineno, f"malformed record ({exc})") from None
            label = parse_label(label, lineno)
            s, a = tokenize(sentence), tokenize(aspect)
            if not s or not a:
                skipped += 1
                continue
            examples.append(Example(tuple(s), tuple(a), label))
    if skipped:
        log.info("%s: skipped %d records with empty sentence or aspect", path, skipped)
    corpus = Corpus(tuple(examples), LABELS3, task_kind, path.stem, skipped)
    return filter_binary(corpus) if binary else corpus


def write_corpus(corpus: Corpus, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for e in corpus:
            fh.write(json.dumps({"sentence": " ".join(e.sentence_tokens),
                                 "aspect": " ".join(e.aspect_tokens),
                                 "label": e.label}) + "\n")


def filter_binary(corpus: Corpus) -> Corpus:
    """Drop neutral examples and switch to the 2-class label space."""
    kept = tuple(e for e in corpus if e.label != "neutral")
    if not kept:
        raise DataError(f"corpus {corpus.name!r} has no positive or negative examples")
    return Corpus(kept, LABELS2, corpus.task_kind, corpus.name)


class Vocabulary:
    """Token/index map with 0 reserved for padding and 1 for unknown."""

    def __init__(self, tokens: Sequence[str] = ()):
        self.tokens = ["<pad>", "<unk>"]
        self.index = {"<pad>": PAD, "<unk>": UNK}
        for t in tokens:
            self.add(t)

    def add(self, token: str) -> int:
        if token not in self.index:
            self.index[token] = len(self.tokens)
            self.tokens.append(token)
        return self.index[token]

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def lookup(self, token: str) -> int:
        return self.index.get(token, UNK)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.lookup(t) for t in tokens]


def build_vocab(corpora: Sequence[Corpus], min_count: int = 1) -> Vocabulary:
    """Index tokens seen at least ``min_count`` times, in first-seen order."""
    counts: Counter[str] = Counter()
    order: dict[str, None] = {}
    for corpus in corpora:
        for e in corpus:
            for t in e.sentence_tokens + e.aspect_tokens:
                counts[t] += 1
                order.setdefault(t)
    return Vocabulary(t for t in order if counts[t] >= min_count)


@dataclass
class EmbeddingTable:
    """Row ``i`` is the vector for vocabulary index ``i``; row 0 stays zero."""

    matrix: np.ndarray
    trainable: bool = True
    coverage: float = 0.0

    @property
    def vocab_size(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def random_embeddings(vocab_size: int, k: int, rng: np.random.Generator,
                      std: float = 0.1) -> np.ndarray:
    m = rng.normal(0.0, std, size=(vocab_size, k))
    m[PAD] = 0.0
    return m


def load_embeddings(path, vocab: Vocabulary, k: int,
                    rng: np.random.Generator | None = None,
                    trainable: bool = True) -> EmbeddingTable:
    """Fill rows from a ``<token> <v1> ... <vk>`` text file."""
    rng = rng or np.random.default_rng(0)
    matrix = random_embeddings(len(vocab), k, rng)
    covered = set()
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip().split(" ")
            if len(parts) <= 1:
                continue
            if len(parts) - 1 != k:
                raise EmbeddingFormatError(
                    f"{path}: line {lineno} has {len(parts) - 1} values, expected {k}")
            token = parts[0]
            if token in vocab.index and vocab.index[token] > UNK:
                try:
                    matrix[vocab.index[token]] = np.array(parts[1:], dtype=np.float64)
                except ValueError:
                    raise EmbeddingFormatError(f"{path}: line {lineno} has a non-numeric value") from None
                covered.add(token)
    matrix[PAD] = 0.0
    coverage = len(covered) / max(1, len(vocab) - 2)
    log.info("embedding coverage %.3f (%d of %d tokens)", coverage, len(covered), len(vocab) - 2)
    return EmbeddingTable(matrix, trainable, coverage)


def split_indices(n_total: int, n_dev: int, seed: int) -> tuple[list[int], list[int]]:
    if n_dev >= n_total:
        raise DataError(f"dev size {n_dev} must be smaller than the training set ({n_total})")
    dev = set(np.random.default_rng(seed).permutation(n_total)[:n_dev].tolist())
    return [i for i in range(n_total) if i not in dev], sorted(dev)


def make_dev_split(train: Corpus, n: int, seed: int) -> tuple[Corpus, Corpus]:
    keep, dev = split_indices(len(train), n, seed)
    return train.subset(keep), train.subset(dev, name=f"{train.name}-dev")


def write_split_manifest(path, train_idx: Sequence[int], dev_idx: Sequence[int]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"split": "train", "indices": list(train_idx)}) + "\n")
        fh.write(json.dumps({"split": "dev", "indices": list(dev_idx)}) + "\n")


def read_split_manifest(path) -> dict[str, list[int]]:
    with Path(path).open(encoding="utf-8") as fh:
        return {rec["split"]: rec["indices"] for rec in map(json.loads, fh)}


# -- index-level batches -------------------------------------------------------

@dataclass
class Batch:
    tokens: np.ndarray    # [N, L] int, 0 = padding
    mask: np.ndarray      # [N, L] bool
    aspect: np.ndarray    # [N, A] int, 0-padded
    labels: np.ndarray    # [N] int

    def __len__(self) -> int:
        return len(self.labels)

    def take(self, idx) -> "Batch":
        return Batch(self.tokens[idx], self.mask[idx], self.aspect[idx], self.labels[idx])


def encode_corpus(corpus: Corpus, vocab: Vocabulary, max_len: int) -> Batch:
    """Index a corpus; sentences are truncated at the end / padded at the end."""
    n = len(corpus)
    tokens = np.zeros((n, max_len), dtype=np.intp)
    mask = np.zeros((n, max_len), dtype=bool)
    width = max((len(e.aspect_tokens) for e in corpus), default=1)
    aspect = np.zeros((n, width), dtype=np.intp)
    for i, e in enumerate(corpus):
        ids = vocab.encode(e.sentence_tokens[:max_len])
        tokens[i, :len(ids)] = ids
        mask[i, :len(ids)] = True
        a = vocab.encode(e.aspect_tokens)
        aspect[i, :len(a)] = a
    return Batch(tokens, mask, aspect, corpus.label_ids())


# -- synthetic contrastive corpus ----------------------------------------------

@dataclass(frozen=True)
class VocabSpec:
    aspects: tuple[str, ...] = ("appetizers", "service", "food", "staff", "drinks",
                                "ambience", "dessert", "prices")
    positive: tuple[str, ...] = ("okay", "great", "delicious", "friendly",
                                 "excellent", "good")
    negative: tuple[str, ...] = ("slow", "terrible", "bland", "rude", "awful", "bad")
    conjunction: str = "but"

    def copula(self, noun: str) -> str:
        return "are" if noun.endswith("s") else "is"


def synth_generate(num_examples: int, vocab_spec: VocabSpec | None = None,
                   seed: int = 0) -> Corpus:
    """Two-clause sentences with opposite polarities, one example per aspect.

    ``num_examples`` counts sentences; the corpus holds twice as many
    examples, and both examples of a sentence share identical tokens.
    """
    spec = vocab_spec or VocabSpec()
    if len(spec.aspects) < 2 or len(spec.positive) < 2 or len(spec.negative) < 2:
        raise ConfigError("need at least 2 aspects and 2 adjectives per polarity")
    rng = np.random.default_rng(seed)
    examples = []
    for _ in range(num_examples):
        a1, a2 = (spec.aspects[i] for i in rng.choice(len(spec.aspects), 2, replace=False))
        first_positive = bool(rng.integers(2))
        pos = spec.positive[rng.integers(len(spec.positive))]
        neg = spec.negative[rng.integers(len(spec.negative))]
        j1, j2 = (pos, neg) if first_positive else (neg, pos)
        sentence = ("the", a1, spec.copula(a1), j1, spec.conjunction,
                    "the", a2, spec.copula(a2), j2)
        l1, l2 = ("positive", "negative") if first_positive else ("negative", "positive")
        examples.append(Example(sentence, (a1,), l1))
        examples.append(Example(sentence, (a2,), l2))
    return Corpus(tuple(examples), LABELS2, "term", f"synth-{seed}")


def clause_spans(tokens: Sequence[str], conjunction: str = "but") -> tuple[range, range]:
    """Token ranges of the two clauses; the conjunction opens the second."""
    cut = list(tokens).index(conjunction)
    return range(0, cut), range(cut, len(tokens))
