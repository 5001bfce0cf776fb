// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

// JSON records shared by the CLI stages and the trainer manifests.

#pragma once

#include <carimirror/camera.hpp>
#include <carimirror/mesh.hpp>
#include <carimirror/statics/lighting.hpp>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <vector>

namespace carimirror::io {

using Json = nlohmann::json;

/// Parses a file; FormatError names the path on syntax errors.
Json read_json(const std::filesystem::path& path);
/// Pretty-printed with two-space indent and a trailing newline. Written via a temporary sibling.
void write_json(const std::filesystem::path& path, const Json& value);

Json to_json(const Intrinsics& K);
Json to_json(const Pose& pose);
Json to_json(const CameraModel& camera);
Json to_json(const SHLighting& lighting);
Json to_json(const std::vector<Vec2>& points);
Json to_json(const Eigen::VectorXd& v);
Json to_json(const LandmarkSet& landmarks);

Intrinsics intrinsics_from_json(const Json& j);
Pose pose_from_json(const Json& j);
CameraModel camera_from_json(const Json& j);
SHLighting lighting_from_json(const Json& j);
std::vector<Vec2> points_from_json(const Json& j);
Eigen::VectorXd vector_from_json(const Json& j);
LandmarkSet landmarks_from_json(const Json& j);

/// {"landmarks": [[x, y], ...]}
std::vector<Vec2> read_landmarks(const std::filesystem::path& path);
void write_landmarks(const std::filesystem::path& path, const std::vector<Vec2>& points);

} // namespace carimirror::io
