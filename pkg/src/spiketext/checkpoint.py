"""Versioned tensor container shared by ANN, SNN and prepared-data artifacts.

Layout (all integers little-endian uint32):

    b"SPKT" | version | header length | header (utf-8 `key=value` lines)
    | tensor count | per tensor: name length, name, ndim, dims..., float32 data
"""

from __future__ import annotations

import struct

import numpy as np

from .ann import CnnConfig, CnnParams
from .snn import LifConfig, SnnModel

MAGIC = b"SPKT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ",".join(map(str, v))
    return str(v)


def parse_value(s: str):
    if s in ("true", "false"):
        return s == "true"
    for cast in (int, float):
        try:
            return cast(s)
        except ValueError:
            pass
    return s


def dump_record(rec: dict) -> str:
    return "".join(f"{k}={format_value(v)}\n" for k, v in rec.items())


def parse_record(text: str) -> dict:
    rec = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CheckpointError(f"line {lineno}: expected key=value, got {line!r}")
        rec[key.strip()] = parse_value(value.strip())
    return rec


def save_container(path, header: dict, tensors: dict):
    head = dump_record(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<II", VERSION, len(head)) + head)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype="<f4")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)) + raw)
            fh.write(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
            fh.write(arr.tobytes())


def load_container(path) -> tuple[dict, dict]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint container")
    version, hlen = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported container version {version}")
    pos = 12
    header = parse_record(data[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", data, pos)
        pos += 4
        name = data[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (ndim,) = struct.unpack_from("<I", data, pos)
        shape = struct.unpack_from(f"<{ndim}I", data, pos + 4)
        pos += 4 + 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        tensors[name] = np.frombuffer(data, dtype="<f4", count=size, offset=pos).reshape(shape).astype(np.float32)
        pos += 4 * size
    return header, tensors


def save_ann(path, params: CnnParams, config: CnnConfig, extra: dict | None = None,
             extra_tensors: dict | None = None):
    header = {"kind": "ann", **config.to_record(), **(extra or {})}
    save_container(path, header, {**params.tensors, **(extra_tensors or {})})


def load_ann(path) -> tuple[CnnParams, CnnConfig, dict]:
    header, tensors = load_container(path)
    return CnnParams(tensors), CnnConfig.from_record(header), header


def save_snn(path, model: SnnModel, extra: dict | None = None, extra_tensors: dict | None = None):
    header = {"kind": "snn", **model.config.to_record(), **model.lif.to_record(), **(extra or {})}
    if model.scale_factors:
        header["scale_factors"] = ",".join(repr(float(f)) for f in model.scale_factors)
    save_container(path, header, {**model.params.tensors, **(extra_tensors or {})})


def load_snn(path) -> tuple[SnnModel, dict]:
    header, tensors = load_container(path)
    if header.get("kind") != "snn":
        raise CheckpointError(f"{path}: expected an SNN checkpoint, found {header.get('kind')!r}")
    factors = header.get("scale_factors", "")
    factors = tuple(float(f) for f in str(factors).split(",") if f)
    model = SnnModel(CnnParams(tensors), CnnConfig.from_record(header), LifConfig.from_record(header), factors)
    return model, header
