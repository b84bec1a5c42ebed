"""Labeled text loading, tokenization, splitting and integer encoding."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
MAX_LEN_CAP = 64


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class Example:
    label: int
    text: str
    tokens: tuple[int, ...] = ()


@dataclass(frozen=True)
class Dataset:
    examples: tuple[Example, ...]
    num_classes: int
    mode: str = "whitespace"

    def __len__(self):
        return len(self.examples)

    @property
    def labels(self) -> np.ndarray:
        return np.array([ex.label for ex in self.examples], dtype=np.int64)

    def token_matrix(self) -> np.ndarray:
        """Encoded ids as an (N, max_len) int array; requires `encode_dataset` first."""
        if not self.examples:
            return np.zeros((0, 0), dtype=np.int64)
        return np.array([ex.tokens for ex in self.examples], dtype=np.int64)


@dataclass
class Vocabulary:
    itos: list[str] = field(default_factory=lambda: [PAD_TOKEN, UNK_TOKEN])
    min_freq: int = 1

    def __post_init__(self):
        self.stoi = {tok: i for i, tok in enumerate(self.itos)}

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi and self.stoi[token] > UNK_ID

    def lookup(self, token: str) -> int:
        return self.stoi.get(token, UNK_ID)

    def encode(self, tokens, max_len: int) -> tuple[int, ...]:
        ids = [self.lookup(t) for t in tokens[:max_len]]
        return tuple(ids + [PAD_ID] * (max_len - len(ids)))

    def decode(self, ids) -> list[str]:
        return [self.itos[i] for i in ids if i != PAD_ID]

    def save(self, path):
        Path(path).write_text("\n".join(self.itos[2:]) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path, min_freq: int = 1) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        return cls([PAD_TOKEN, UNK_TOKEN] + [ln for ln in lines if ln], min_freq)


def tokenize(text: str, mode: str = "whitespace") -> list[str]:
    if mode == "whitespace":
        return text.lower().split()
    if mode == "character":
        return [ch for ch in text if not ch.isspace()]
    raise CorpusError(f"unknown tokenization mode {mode!r}")


def load_dataset(path, mode: str = "whitespace") -> Dataset:
    """Read a `<label>\\t<text>` file, one example per non-empty line."""
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            label_str, sep, text = line.partition("\t")
            if not sep:
                raise CorpusError(f"line {lineno}: expected '<label>\\t<text>'")
            try:
                label = int(label_str)
            except ValueError:
                raise CorpusError(f"line {lineno}: non-integer label {label_str!r}") from None
            if label < 0:
                raise CorpusError(f"line {lineno}: negative label {label}")
            examples.append(Example(label, text))
    if not examples:
        raise CorpusError("empty dataset")
    k = max(ex.label for ex in examples) + 1
    return Dataset(tuple(examples), k, mode)


def split(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    if not 0.0 < test_fraction < 1.0:
        raise CorpusError(f"test fraction must lie in (0, 1), got {test_fraction}")
    n = len(dataset)
    n_test = int(round(test_fraction * n))
    order = np.random.default_rng(seed).permutation(n)
    test_idx = np.sort(order[:n_test])
    train_idx = np.sort(order[n_test:])
    pick = lambda idx: replace(dataset, examples=tuple(dataset.examples[i] for i in idx))
    return pick(train_idx), pick(test_idx)


def build_vocab(train: Dataset, min_freq: int = 1) -> Vocabulary:
    if not len(train):
        raise CorpusError("cannot build a vocabulary from an empty dataset")
    counts = Counter()
    for ex in train.examples:
        counts.update(tokenize(ex.text, train.mode))
    kept = sorted((tok for tok, c in counts.items() if c >= min_freq),
                  key=lambda tok: (-counts[tok], tok))
    return Vocabulary([PAD_TOKEN, UNK_TOKEN] + kept, min_freq)


def default_max_len(train: Dataset, cap: int = MAX_LEN_CAP) -> int:
    """95th percentile of training token lengths, capped."""
    lengths = [len(tokenize(ex.text, train.mode)) for ex in train.examples]
    return int(min(cap, max(1, np.ceil(np.percentile(lengths, 95)))))


def encode_dataset(dataset: Dataset, vocab: Vocabulary, max_len: int) -> Dataset:
    examples = tuple(
        replace(ex, tokens=vocab.encode(tokenize(ex.text, dataset.mode), max_len))
        for ex in dataset.examples
    )
    return replace(dataset, examples=examples)


def mode_for_lang(lang: str) -> str:
    return {"en": "whitespace", "zh": "character"}[lang]
