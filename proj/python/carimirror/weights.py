# Copyright 2026 The carimirror Authors.
# SPDX-License-Identifier: Apache-2.0

"""Pure-Python reader and writer for carimirror weights bundles.

Layout: an 8-byte little-endian manifest length, the UTF-8 JSON manifest, then every
tensor as little-endian float32 in manifest order. The manifest carries ``format``,
``version`` and a ``tensors`` list of ``{name, shape, fnv1a64}`` entries.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

FORMAT_NAME = "carimirror.weights"
FORMAT_VERSION = 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK = 0xFFFFFFFFFFFFFFFF


class WeightsFormatError(ValueError):
    pass


def fnv1a64(data: bytes) -> str:
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK
    return f"{h:016x}"


def _le_float32(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f4").tobytes()


@dataclass
class WeightsBundle:
    manifest: dict = field(default_factory=dict)
    tensors: Dict[str, np.ndarray] = field(default_factory=dict)

    def add(self, name: str, array) -> None:
        if name in self.tensors:
            raise ValueError(f"duplicate tensor '{name}'")
        a = np.asarray(array, dtype=np.float32)
        if not np.all(np.isfinite(a)):
            raise ValueError(f"tensor '{name}' has non-finite values")
        self.tensors[name] = a


def serialize(bundle: WeightsBundle) -> bytes:
    manifest = {k: v for k, v in bundle.manifest.items() if k != "tensors"}
    manifest["format"] = FORMAT_NAME
    manifest["version"] = FORMAT_VERSION
    entries, payload = [], []
    for name, a in bundle.tensors.items():
        raw = _le_float32(a)
        entries.append({"name": name, "shape": [int(d) for d in a.shape], "fnv1a64": fnv1a64(raw)})
        payload.append(raw)
    manifest["tensors"] = entries
    text = json.dumps(manifest, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)
    head = text.encode("utf-8")
    return struct.pack("<Q", len(head)) + head + b"".join(payload)


def parse(data: bytes, verify_checksums: bool = True) -> WeightsBundle:
    if len(data) < 8:
        raise WeightsFormatError("truncated: missing manifest length")
    (n,) = struct.unpack_from("<Q", data, 0)
    if n > len(data) - 8:
        raise WeightsFormatError(f"truncated: manifest length {n} exceeds file")
    try:
        manifest = json.loads(data[8 : 8 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise WeightsFormatError(f"manifest is not valid JSON: {e}") from e
    if not isinstance(manifest, dict) or manifest.get("format") != FORMAT_NAME:
        raise WeightsFormatError("not a carimirror weights file")
    if manifest.get("version") != FORMAT_VERSION:
        raise WeightsFormatError(f"unsupported version {manifest.get('version')!r}, expected {FORMAT_VERSION}")
    entries = manifest.pop("tensors", None)
    if not isinstance(entries, list):
        raise WeightsFormatError("manifest has no tensor list")
    out = WeightsBundle(manifest=manifest)
    offset = 8 + n
    for e in entries:
        name, shape = e["name"], [int(d) for d in e["shape"]]
        if name in out.tensors:
            raise WeightsFormatError(f"duplicate tensor '{name}'")
        if any(d < 0 for d in shape):
            raise WeightsFormatError(f"tensor '{name}' has a negative dimension")
        size = 4 * int(np.prod(shape, dtype=np.int64))
        if offset + size > len(data):
            raise WeightsFormatError(f"truncated: tensor '{name}' needs {size} bytes")
        raw = data[offset : offset + size]
        if verify_checksums and "fnv1a64" in e and e["fnv1a64"] != fnv1a64(raw):
            raise WeightsFormatError(f"checksum mismatch in tensor '{name}'")
        a = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(shape)
        if not np.all(np.isfinite(a)):
            raise WeightsFormatError(f"tensor '{name}' has non-finite values")
        out.tensors[name] = a
        offset += size
    if offset != len(data):
        raise WeightsFormatError(f"{len(data) - offset} trailing bytes after the last tensor")
    return out


def save(bundle: WeightsBundle, path: "os.PathLike[str] | str") -> None:
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as f:
        f.write(serialize(bundle))
    os.replace(tmp, path)


def load(path: "os.PathLike[str] | str", verify_checksums: bool = True) -> WeightsBundle:
    with open(path, "rb") as f:
        return parse(f.read(), verify_checksums)


def from_arrays(manifest: Mapping, tensors: Mapping[str, np.ndarray]) -> WeightsBundle:
    b = WeightsBundle(manifest=dict(manifest))
    for name, a in tensors.items():
        b.add(name, a)
    return b
