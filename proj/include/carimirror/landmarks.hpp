// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <carimirror/mesh.hpp>

#include <span>

namespace carimirror {

/// Interior angles (radians) of a closed 3D polygon, in loop order. The polygon plane is
/// oriented by its Newell normal, so reflex corners of a simple planar loop are reported
/// as angles above pi. Throws DegenerateError for coincident adjacent points.
Eigen::VectorXd polygon_interior_angles(std::span<const Vec3> loop);

/// Concatenated interior angles of every landmark polygon.
Eigen::VectorXd landmark_angle_vector(const TriMesh& mesh, const LandmarkSet& landmarks);

/// Same as above for a raw V x 3 vertex matrix.
Eigen::VectorXd landmark_angle_vector(const Eigen::MatrixX3d& vertices, const LandmarkSet& landmarks);

} // namespace carimirror
