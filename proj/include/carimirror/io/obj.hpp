// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <carimirror/mesh.hpp>

#include <filesystem>
#include <optional>

namespace carimirror::io {

struct ObjData
{
    TriMesh mesh;
    /// Per-vertex texture coordinates when the file's vt indices coincide with v indices.
    std::optional<Eigen::MatrixX2d> uv;
};

/// Reads v / vt / f records (1-based, triangles only; "f a/b/c" forms accepted).
ObjData read_obj(const std::filesystem::path& path);

/// Writes v (and vt when given) records with "%.9g" precision; face records use v/vt pairs.
void write_obj(const std::filesystem::path& path, const TriMesh& mesh, const Eigen::MatrixX2d* uv = nullptr);

/// Writes a point cloud as ASCII PLY.
void write_ply(const std::filesystem::path& path, const Eigen::MatrixX3d& points);
Eigen::MatrixX3d read_ply(const std::filesystem::path& path);

} // namespace carimirror::io
