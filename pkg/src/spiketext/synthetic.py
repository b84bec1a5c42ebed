"""Bundled desk-scale sentiment corpus and matching word vectors.

Sentences mix neutral filler with positive and negative cue words; the label
is the majority polarity, with a little label noise. The vectors place cue
words along a shared sentiment direction, loosely imitating how pre-trained
embeddings cluster related words.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

CORPUS_FILE = "synthetic_sentiment.tsv"
VECTORS_FILE = "synthetic_vectors.txt"

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "sh"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ou"]


def _words(rng, n, taken):
    out = []
    while len(out) < n:
        w = "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(rng.integers(2, 4)))
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def make_corpus(n: int = 2000, seed: int = 7, n_cue: int = 60, n_neutral: int = 400,
                label_noise: float = 0.05):
    """Returns (lines, cue polarity dict, neutral words)."""
    rng = np.random.default_rng(seed)
    taken = set()
    pos, neg = _words(rng, n_cue, taken), _words(rng, n_cue, taken)
    neutral = _words(rng, n_neutral, taken)
    # Zipf-like usage so some cue words are rare in training
    cue_p = 1.0 / np.arange(1, n_cue + 1) ** 0.8
    cue_p /= cue_p.sum()
    neu_p = 1.0 / np.arange(1, n_neutral + 1)
    neu_p /= neu_p.sum()
    lines = []
    for _ in range(n):
        label = int(rng.integers(0, 2))
        major, minor = (pos, neg) if label == 1 else (neg, pos)
        n_major = int(rng.integers(1, 4))
        n_minor = int(rng.integers(0, n_major))
        length = int(rng.integers(8, 21))
        toks = list(rng.choice(neutral, size=max(length - n_major - n_minor, 1), p=neu_p))
        toks += list(rng.choice(major, size=n_major, p=cue_p))
        toks += list(rng.choice(minor, size=n_minor, p=cue_p)) if n_minor else []
        rng.shuffle(toks)
        if rng.random() < label_noise:
            label = 1 - label
        lines.append(f"{label}\t{' '.join(toks)}")
    polarity = {w: 1 for w in pos} | {w: -1 for w in neg}
    return lines, polarity, neutral


def make_vectors(polarity: dict, neutral, dim: int = 32, seed: int = 7, signal: float = 0.6):
    rng = np.random.default_rng(seed + 1)
    direction = rng.normal(size=dim)
    direction /= np.linalg.norm(direction)
    lines = []
    for w, sign in polarity.items():
        v = rng.normal(0, 0.35, dim) + sign * signal * direction * np.sqrt(dim) * 0.35
        lines.append(w + " " + " ".join(f"{x:.5f}" for x in v))
    for w in neutral:
        v = rng.normal(0, 0.35, dim)
        lines.append(w + " " + " ".join(f"{x:.5f}" for x in v))
    return lines


def write_bundle(directory, n: int = 2000, dim: int = 32, seed: int = 7):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines, polarity, neutral = make_corpus(n, seed)
    (directory / CORPUS_FILE).write_text("\n".join(lines) + "\n", encoding="utf-8")
    vec = make_vectors(polarity, neutral, dim, seed)
    (directory / VECTORS_FILE).write_text("\n".join(vec) + "\n", encoding="utf-8")
    return directory / CORPUS_FILE, directory / VECTORS_FILE


def bundled_paths() -> tuple[Path, Path]:
    base = Path(str(resources.files("spiketext") / "data"))
    return base / CORPUS_FILE, base / VECTORS_FILE


def desk_config_path() -> Path:
    return Path(str(resources.files("spiketext") / "data" / "desk.cfg"))
