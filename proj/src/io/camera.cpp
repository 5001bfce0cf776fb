// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#include <carimirror/camera.hpp>
#include <carimirror/error.hpp>

#include <cmath>
#include <limits>
#include <numbers>

namespace carimirror {

void CameraModel::validate() const
{
    if (!(intrinsics.fx > 0.0) || !(intrinsics.fy > 0.0)) throw InvalidInput("camera focal lengths must be positive");
    if (std::abs(pose.rotation.norm() - 1.0) > 1e-9) throw InvalidInput("camera rotation quaternion is not unit length");
    if (!pose.translation.allFinite()) throw InvalidInput("camera translation is not finite");
}

double rotation_angle_deg(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b)
{
    const double d = std::min(1.0, std::abs(a.normalized().dot(b.normalized())));
    return 2.0 * std::acos(d) * 180.0 / std::numbers::pi;
}

Pose look_at_face(double yawDeg, double pitchDeg, double distance)
{
    const double d2r = std::numbers::pi / 180.0;
    Pose p;
    p.rotation = (Eigen::AngleAxisd(pitchDeg * d2r, Vec3::UnitX()) * Eigen::AngleAxisd(yawDeg * d2r, Vec3::UnitY())).normalized();
    p.translation = Vec3(0.0, 0.0, -distance);
    return p;
}

double reprojection_cost(std::span<const Vec3> points, std::span<const Vec2> observed, const Intrinsics& K, const Pose& pose)
{
    if (points.size() != observed.size()) throw InvalidInput("reprojection_cost: point/observation count mismatch");
    const Mat3 R = pose.R();
    double e = 0.0;
    for (size_t i = 0; i < points.size(); ++i) {
        const Vec3 pc = R * points[i] + pose.translation;
        if (!(pc.z() < 0.0)) return std::numeric_limits<double>::infinity();
        e += (project(K, pc) - observed[i]).squaredNorm();
    }
    return e;
}

PoseFit fit_pose(std::span<const Vec3> points, std::span<const Vec2> observed, const Intrinsics& K,
                 const Pose& init, int maxIterations, double stepTolerance)
{
    PoseFit out{init, reprojection_cost(points, observed, K, init), 0};
    for (int it = 0; it < maxIterations; ++it) {
        const Mat3 R = out.pose.R();
        Eigen::Matrix<double, 6, 6> H = Eigen::Matrix<double, 6, 6>::Zero();
        Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
        for (size_t i = 0; i < points.size(); ++i) {
            const Vec3 pc = R * points[i] + out.pose.translation;
            if (!(pc.z() < 0.0)) continue;
            const Eigen::Matrix<double, 2, 3> Jp = project_jacobian(K, pc);
            Eigen::Matrix<double, 2, 6> J;
            J.leftCols<3>() = -Jp * skew(R * points[i]);
            J.rightCols<3>() = Jp;
            const Vec2 r = project(K, pc) - observed[i];
            H += J.transpose() * J;
            g += J.transpose() * r;
        }
        const Eigen::Matrix<double, 6, 1> step = -H.ldlt().solve(g);
        if (!step.allFinite()) break;
        ++out.iterations;
        if (step.norm() < stepTolerance) break;
        double scale = 1.0;
        bool accepted = false;
        for (int h = 0; h < 20 && !accepted; ++h, scale *= 0.5) {
            const Pose cand = perturb(out.pose, scale * step.head<3>(), scale * step.tail<3>());
            const double c = reprojection_cost(points, observed, K, cand);
            if (c <= out.cost) {
                out.pose = cand;
                out.cost = c;
                accepted = true;
            }
        }
        if (!accepted) break;
    }
    return out;
}

} // namespace carimirror
