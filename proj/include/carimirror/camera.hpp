// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <carimirror/mesh.hpp>

#include <Eigen/Geometry>

#include <span>

namespace carimirror {

/// Pinhole intrinsics. Cameras look down -Z with +Y up; image rows grow downwards.
struct Intrinsics
{
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
};

/// Rigid transform x_cam = R x + t.
struct Pose
{
    Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
    Vec3 translation = Vec3::Zero();

    Mat3 R() const { return rotation.toRotationMatrix(); }
    Vec3 apply(const Vec3& x) const { return rotation * x + translation; }
    /// Camera centre in world coordinates.
    Vec3 center() const { return -(rotation.conjugate() * translation); }
    /// Unit viewing axis (camera -Z) in world coordinates.
    Vec3 view_axis() const { return rotation.conjugate() * Vec3(0, 0, -1); }
};

struct CameraModel
{
    Intrinsics intrinsics;
    Pose pose;

    /// Throws InvalidInput unless focal lengths are positive and the quaternion is unit within 1e-9.
    void validate() const;
};

/// Projects a camera-space point. Points must satisfy z < 0.
inline Vec2 project(const Intrinsics& K, const Vec3& pc)
{
    const double s = -pc.z();
    return {K.cx + K.fx * pc.x() / s, K.cy - K.fy * pc.y() / s};
}

/// 2x3 Jacobian of `project` w.r.t. the camera-space point.
inline Eigen::Matrix<double, 2, 3> project_jacobian(const Intrinsics& K, const Vec3& pc)
{
    const double s = -pc.z();
    Eigen::Matrix<double, 2, 3> J;
    J << K.fx / s, 0.0, K.fx * pc.x() / (s * s),
         0.0, -K.fy / s, -K.fy * pc.y() / (s * s);
    return J;
}

inline Mat3 skew(const Vec3& v)
{
    Mat3 m;
    m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return m;
}

/// Rotation from an axis-angle vector.
inline Eigen::Quaterniond quat_exp(const Vec3& w)
{
    const double angle = w.norm();
    if (angle < 1e-12) return Eigen::Quaterniond(1.0, 0.5 * w.x(), 0.5 * w.y(), 0.5 * w.z()).normalized();
    return Eigen::Quaterniond(Eigen::AngleAxisd(angle, w / angle));
}

/// Applies a left-multiplied rotation increment and renormalizes.
inline Pose perturb(const Pose& p, const Vec3& dRot, const Vec3& dTrans)
{
    Pose out;
    out.rotation = (quat_exp(dRot) * p.rotation).normalized();
    out.translation = p.translation + dTrans;
    return out;
}

/// Angle in degrees between two rotations.
double rotation_angle_deg(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b);

/// Pose that places a face-sized object (frontal along +Z) at `distance` in front of the camera,
/// rotated by yaw/pitch (degrees) about the object origin.
Pose look_at_face(double yawDeg, double pitchDeg, double distance);

/// Sum of squared reprojection errors; +inf if any point is not in front of the camera.
double reprojection_cost(std::span<const Vec3> points, std::span<const Vec2> observed, const Intrinsics& K, const Pose& pose);

struct PoseFit
{
    Pose pose;
    double cost = 0.0;
    int iterations = 0;
};

/// Gauss-Newton over SE(3) on the reprojection cost with left-multiplied rotation updates.
/// A step that raises the cost is halved until it does not; stops after `maxIterations`
/// or once the step norm drops below `stepTolerance`.
PoseFit fit_pose(std::span<const Vec3> points, std::span<const Vec2> observed, const Intrinsics& K,
                 const Pose& init, int maxIterations = 10, double stepTolerance = 1e-8);

} // namespace carimirror
