"""Poisson rate coding of [0, 1]-valued embedded sequences."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

# stream purposes mixed into the RNG key
TRAIN_STREAM = 1
EVAL_STREAM = 2
STATS_STREAM = 3


class EncodingError(ValueError):
    pass


@dataclass(frozen=True)
class SpikeTrain:
    bits: np.ndarray  # (T, L, D) or (T, B, L, D)
    seed: int
    stream: tuple = ()

    @property
    def steps(self) -> int:
        return self.bits.shape[0]


def stream_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), *map(int, key)])


def encode_poisson(x: np.ndarray, steps: int, rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
    """Independent Bernoulli(x) draw per (step, position, component)."""
    x = np.asarray(x)
    if x.size and (np.nanmin(x) < 0 or np.nanmax(x) > 1 or np.isnan(x).any()):
        raise EncodingError("spike probabilities must lie in [0, 1]")
    return (rng.random((steps,) + x.shape) < x).astype(dtype)


def encode_example(x: np.ndarray, steps: int, seed: int, *key: int) -> SpikeTrain:
    return SpikeTrain(encode_poisson(x, steps, stream_rng(seed, *key)), seed, key)


def encode_batch(xs: np.ndarray, steps: int, seed: int, stream: int, epoch: int,
                 example_ids, dtype=np.float32) -> np.ndarray:
    """(B, L, D) -> (T, B, L, D); each example keyed by its own id so results
    do not depend on batch composition or order."""
    out = np.empty((steps,) + xs.shape, dtype=dtype)
    for b, ex_id in enumerate(example_ids):
        out[:, b] = encode_poisson(xs[b], steps, stream_rng(seed, stream, epoch, ex_id), dtype)
    return out


def write_bitpacked(path, bits: np.ndarray):
    """Header of T, L, D as little-endian uint32, then row-major bits padded to a byte."""
    T, L, D = bits.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<3I", T, L, D))
        fh.write(np.packbits(bits.astype(np.uint8).ravel()).tobytes())


def read_bitpacked(path) -> np.ndarray:
    with open(path, "rb") as fh:
        T, L, D = struct.unpack("<3I", fh.read(12))
        packed = np.frombuffer(fh.read(), dtype=np.uint8)
    return np.unpackbits(packed, count=T * L * D).reshape(T, L, D)
