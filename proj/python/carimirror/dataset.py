# Copyright 2026 The carimirror Authors.
# SPDX-License-Identifier: Apache-2.0

"""Readers for the trainer corpora written by ``carimirror synth``.

Each domain directory holds ``manifest.json`` and ``meshes/*.obj``. Every mesh shares one
topology and identity labels are dense ``0..I-1``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

SCHEMA_VERSION = 1
DOMAINS = ("regular", "caricature")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK = 0xFFFFFFFFFFFFFFFF


class ManifestError(ValueError):
    pass


def topology_id(faces: np.ndarray, vertex_count: int) -> str:
    """FNV-1a over little-endian uint32 values: the vertex count, then the face indices."""
    data = np.concatenate([[vertex_count], np.asarray(faces, dtype=np.int64).ravel()]).astype("<u4").tobytes()
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK
    return f"{h:016x}"


def read_obj(path: "os.PathLike[str] | str") -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    """Triangle OBJ as (vertices (V,3), faces (F,3), uv (V,2) or None)."""
    verts, uvs, faces, face_uv = [], [], [], []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "vt":
                uvs.append([float(x) for x in parts[1:3]])
            elif parts[0] == "f":
                if len(parts) != 4:
                    raise ManifestError(f"{path}: only triangles are supported")
                corner = [p.split("/") for p in parts[1:]]
                faces.append([int(c[0]) - 1 for c in corner])
                face_uv.append([int(c[1]) - 1 if len(c) > 1 and c[1] else -1 for c in corner])
    v = np.asarray(verts, dtype=np.float64).reshape(-1, 3)
    fa = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    uv = None
    if uvs and np.array_equal(np.asarray(face_uv), fa) and len(uvs) == len(v):
        uv = np.asarray(uvs, dtype=np.float64)
    return v, fa, uv


@dataclass
class MeshEntry:
    path: Path
    identity: int
    expression: int


@dataclass
class DomainManifest:
    root: Path
    domain: str
    topology_id: str
    vertex_count: int
    identity_count: int
    expression_count: int
    landmarks: Path
    meshes: List[MeshEntry]

    def load_vertices(self, check_topology: bool = True) -> np.ndarray:
        """All meshes stacked as (N, V, 3)."""
        out = np.empty((len(self.meshes), self.vertex_count, 3))
        for i, m in enumerate(self.meshes):
            v, f, _ = read_obj(m.path)
            if v.shape[0] != self.vertex_count:
                raise ManifestError(f"{m.path}: {v.shape[0]} vertices, manifest says {self.vertex_count}")
            if check_topology and topology_id(f, v.shape[0]) != self.topology_id:
                raise ManifestError(f"{m.path}: topology differs from the manifest")
            out[i] = v
        return out

    def labels(self) -> np.ndarray:
        return np.array([m.identity for m in self.meshes], dtype=np.int64)

    def landmark_indices(self) -> List[int]:
        with open(self.landmarks, "r", encoding="utf-8") as f:
            return list(json.load(f)["indices"])


def read_manifest(path: "os.PathLike[str] | str") -> DomainManifest:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    with open(path, "r", encoding="utf-8") as f:
        j = json.load(f)
    if j.get("schemaVersion") != SCHEMA_VERSION:
        raise ManifestError(f"{path}: unsupported schemaVersion {j.get('schemaVersion')!r}")
    if j.get("domain") not in DOMAINS:
        raise ManifestError(f"{path}: domain must be one of {DOMAINS}")
    root = path.parent
    try:
        meshes = [MeshEntry(root / m["path"], int(m["identity"]), int(m["expression"])) for m in j["meshes"]]
        out = DomainManifest(
            root=root,
            domain=j["domain"],
            topology_id=str(j["topologyId"]),
            vertex_count=int(j["vertexCount"]),
            identity_count=int(j["identityCount"]),
            expression_count=int(j["expressionCount"]),
            landmarks=root / j["landmarks"],
            meshes=meshes,
        )
    except (KeyError, TypeError) as e:
        raise ManifestError(f"{path}: missing or malformed field {e}") from e
    ids = sorted({m.identity for m in meshes})
    if ids != list(range(out.identity_count)):
        raise ManifestError(f"{path}: identity labels are not dense 0..{out.identity_count - 1}")
    return out
