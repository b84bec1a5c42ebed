"""Word-vector loading and the shift into [0, 1] that makes embeddings spike-encodable."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .corpus import PAD_ID, Vocabulary

CLIP_SIGMAS = 3.0


class EmbeddingError(ValueError):
    pass


@dataclass(frozen=True)
class EmbeddingStats:
    mean: float
    std: float


@dataclass(frozen=True)
class EmbeddingTable:
    matrix: np.ndarray
    stats: EmbeddingStats
    trainable: bool = True

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def lookup(self, token_ids) -> np.ndarray:
        return self.matrix[np.asarray(token_ids)]


def load_embeddings(path, vocab: Vocabulary, dim: int, seed: int = 0) -> np.ndarray:
    """Build a raw (V, dim) matrix from a `token v1 ... vD` text file.

    Vocabulary tokens missing from the file get rows drawn uniformly from the
    observed value range; the pad row is zero.
    """
    raw = np.zeros((len(vocab), dim), dtype=np.float64)
    found = np.zeros(len(vocab), dtype=bool)
    lo, hi = np.inf, -np.inf
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\r\n").split(" ")
            if len(parts) == 1 and not parts[0]:
                continue
            if len(parts) != dim + 1:
                raise EmbeddingError(
                    f"line {lineno}: expected {dim} values, got {len(parts) - 1}")
            try:
                values = np.array([float(v) for v in parts[1:]])
            except ValueError as exc:
                raise EmbeddingError(f"line {lineno}: {exc}") from None
            lo, hi = min(lo, values.min()), max(hi, values.max())
            idx = vocab.stoi.get(parts[0])
            if idx is not None and idx != PAD_ID:
                raw[idx] = values
                found[idx] = True
    if not np.isfinite(lo):
        lo, hi = -1.0, 1.0
    missing = np.flatnonzero(~found)
    missing = missing[missing != PAD_ID]
    rng = np.random.default_rng(seed)
    raw[missing] = rng.uniform(lo, hi, size=(len(missing), dim))
    return raw


def random_embeddings(vocab_size: int, dim: int, seed: int = 0) -> np.ndarray:
    """Gaussian raw vectors for the randomly-initialized-embedding ablation."""
    raw = np.random.default_rng(seed).normal(0.0, 1.0, size=(vocab_size, dim))
    raw[PAD_ID] = 0.0
    return raw


def compute_stats(raw: np.ndarray) -> EmbeddingStats:
    # pad row is excluded so it does not drag the statistics towards zero
    values = raw[1:] if raw.shape[0] > 1 else raw
    return EmbeddingStats(float(values.mean()), float(values.std()))


def normalize_shift(raw: np.ndarray, stats: EmbeddingStats | None = None,
                    dtype=np.float32) -> EmbeddingTable:
    """Clip to mean +/- 3 std, divide by 6 std and recentre at 0.5."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.size == 0:
        raise EmbeddingError("empty embedding matrix")
    stats = stats or compute_stats(raw)
    if not stats.std > 0:
        raise EmbeddingError("embedding values are constant (std = 0)")
    mu, sd = stats.mean, stats.std
    lo, hi = mu - CLIP_SIGMAS * sd, mu + CLIP_SIGMAS * sd
    out = (np.clip(raw, lo, hi) - mu) / (2 * CLIP_SIGMAS * sd) + 0.5
    # values at a clip bound land exactly on 0 or 1, not within an ulp of it
    out = np.where(raw <= lo, 0.0, np.where(raw >= hi, 1.0, np.clip(out, 0.0, 1.0)))
    out[PAD_ID] = 0.0
    return EmbeddingTable(out.astype(dtype), stats)


def clip01(table: EmbeddingTable) -> EmbeddingTable:
    m = np.clip(table.matrix, 0.0, 1.0)
    m[PAD_ID] = 0.0
    return replace(table, matrix=m)
