// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#include <carimirror/error.hpp>
#include <carimirror/landmarks.hpp>

#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <vector>

namespace carimirror {

Eigen::VectorXd polygon_interior_angles(std::span<const Vec3> loop)
{
    const auto n = static_cast<Eigen::Index>(loop.size());
    if (n < 3) throw InvalidInput("polygon needs at least 3 points");

    double scale = 0.0;
    for (const Vec3& p : loop) scale = std::max(scale, (p - loop[0]).norm());
    const double eps = 1e-12 * std::max(scale, 1e-300);

    Vec3 normal = Vec3::Zero();
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vec3& a = loop[static_cast<size_t>(i)];
        const Vec3& b = loop[static_cast<size_t>((i + 1) % n)];
        normal += a.cross(b);
        if ((b - a).norm() <= eps) throw DegenerateError("coincident adjacent landmarks in polygon");
    }
    const double nlen = normal.norm();
    if (!(nlen > eps * eps)) throw DegenerateError("landmark polygon has no well-defined plane");
    normal /= nlen;

    Eigen::VectorXd angles(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vec3& prev = loop[static_cast<size_t>((i + n - 1) % n)];
        const Vec3& cur = loop[static_cast<size_t>(i)];
        const Vec3& next = loop[static_cast<size_t>((i + 1) % n)];
        const Vec3 a = cur - prev;
        const Vec3 b = next - cur;
        const double turning = std::atan2(a.cross(b).dot(normal), a.dot(b));
        angles[i] = std::numbers::pi - turning;
    }
    return angles;
}

Eigen::VectorXd landmark_angle_vector(const Eigen::MatrixX3d& vertices, const LandmarkSet& landmarks)
{
    landmarks.validate(static_cast<int>(vertices.rows()));
    std::vector<double> out;
    std::vector<Vec3> loop;
    for (const auto& poly : landmarks.polygons) {
        loop.clear();
        for (int p : poly) loop.push_back(vertices.row(landmarks.indices[static_cast<size_t>(p)]).transpose());
        const Eigen::VectorXd a = polygon_interior_angles(loop);
        out.insert(out.end(), a.data(), a.data() + a.size());
    }
    return Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size()));
}

Eigen::VectorXd landmark_angle_vector(const TriMesh& mesh, const LandmarkSet& landmarks)
{
    return landmark_angle_vector(mesh.vertices(), landmarks);
}

} // namespace carimirror
