// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

// Synthetic capture rendering for fixtures, tests and the synth command.

#pragma once

#include <carimirror/camera.hpp>
#include <carimirror/image.hpp>
#include <carimirror/statics/capture.hpp>
#include <carimirror/statics/lighting.hpp>

#include <functional>
#include <vector>

namespace carimirror {

/// Linear RGB albedo as a function of chart coordinates.
using AlbedoFn = std::function<Vec3(double u, double v)>;

/// Square-pixel intrinsics with f = 1.5 * width and a centred principal point.
Intrinsics default_intrinsics(int width, int height);

/// Distance at which the synthetic face spans about 60% of the image width.
double default_face_distance(const Intrinsics& K, int width);

/// Lighting that shades every normal with intensity `level` (only the constant band set).
SHLighting ambient_lighting(double level = 1.0);

/// Frontal key light plus ambient term; normals facing the camera get about `level`.
SHLighting soft_key_lighting(double level = 1.0);

/// Renders albedo(u, v) * SH(n) with perspective-correct interpolation of uv and normals.
/// Channels: 3 for RGB, 1 for gray (mean of the albedo channels).
Image render_view(const TriMesh& mesh, const Eigen::MatrixX2d& uv, const CameraModel& camera, int width, int height,
                  const SHLighting& lighting, const AlbedoFn& albedo, int channels = 3, double background = 0.0);

/// Projected landmark vertices.
std::vector<Vec2> project_landmarks(const TriMesh& mesh, const LandmarkSet& landmarks, const CameraModel& camera);

/// Yaw angles (degrees) of the default 5-view rig.
std::vector<double> default_rig_yaws();

/// Renders one capture view per camera.
MultiViewCapture render_capture(const TriMesh& mesh, const Eigen::MatrixX2d& uv, const LandmarkSet& landmarks,
                                const std::vector<CameraModel>& cameras, int width, int height,
                                const SHLighting& lighting, const AlbedoFn& albedo);

} // namespace carimirror
