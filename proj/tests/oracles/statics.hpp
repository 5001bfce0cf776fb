// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

// Synthetic capture rigs and closed-form references for the static modeler.

#pragma once

#include "support.hpp"

#include <carimirror/pipeline/scene.hpp>
#include <carimirror/statics/bundle.hpp>
#include <carimirror/synthetic.hpp>

#include <array>
#include <numbers>

namespace carimirror::testing {

// Closed-form Cartesian real SH table, written independently of the Legendre-based implementation.
inline std::array<double, 9> sh_table(const Vec3& n)
{
    const double pi = std::numbers::pi;
    const double x = n.x();
    const double y = n.y();
    const double z = n.z();
    return {0.5 / std::sqrt(pi),
            std::sqrt(3.0 / (4.0 * pi)) * y,
            std::sqrt(3.0 / (4.0 * pi)) * z,
            std::sqrt(3.0 / (4.0 * pi)) * x,
            0.5 * std::sqrt(15.0 / pi) * x * y,
            0.5 * std::sqrt(15.0 / pi) * y * z,
            0.25 * std::sqrt(5.0 / pi) * (3.0 * z * z - 1.0),
            0.5 * std::sqrt(15.0 / pi) * x * z,
            0.25 * std::sqrt(15.0 / pi) * (x * x - y * y)};
}

struct Rig
{
    TriMesh mesh;
    std::vector<CameraModel> cameras;
    Eigen::VectorXd identity;
    Eigen::VectorXd expression;
};

inline Rig synthetic_rig(std::uint64_t seed, int size = 256)
{
    const auto& model = default_face_model();
    std::mt19937_64 rng(seed);
    Rig r;
    r.identity = model.sample_identity(rng, 0.8);
    r.expression = Eigen::VectorXd::Zero(SyntheticFaceModel::kExpressionDims);
    r.mesh = model.synthesize(r.identity, r.expression);
    const Intrinsics K = default_intrinsics(size, size);
    const double D = default_face_distance(K, size);
    std::uniform_real_distribution<double> jitter(-3.0, 3.0);
    for (double yaw : default_rig_yaws()) {
        Pose p = look_at_face(yaw + jitter(rng), jitter(rng), D);
        p.translation += Vec3(jitter(rng), jitter(rng), 5.0 * jitter(rng));
        r.cameras.push_back({K, p});
    }
    return r;
}

inline BundleProblem bundle_truth(std::uint64_t seed)
{
    const Rig rig = synthetic_rig(seed);
    BundleProblem p;
    p.intrinsics = rig.cameras.front().intrinsics;
    for (const auto& c : rig.cameras) p.poses.push_back(c.pose);
    const auto& V = rig.mesh.vertices();
    for (int i = 0; i < rig.mesh.vertex_count(); i += 3) p.points.push_back(V.row(i).transpose());
    for (size_t i = 0; i < p.points.size(); ++i) {
        for (size_t j = 0; j < p.poses.size(); ++j) {
            const Vec2 uv = project(p.intrinsics, p.poses[j].apply(p.points[i]));
            p.observations.push_back({static_cast<int>(i), static_cast<int>(j), uv});
        }
    }
    return p;
}

inline BundleProblem perturbed(const BundleProblem& truth, std::mt19937_64& rng, double pointNoise, double angleNoise, double transNoise)
{
    BundleProblem p = truth;
    std::normal_distribution<double> nd;
    for (auto& x : p.points) x += pointNoise * Vec3(nd(rng), nd(rng), nd(rng));
    for (size_t j = 2; j < p.poses.size(); ++j) {
        p.poses[j] = perturb(p.poses[j], angleNoise * Vec3(nd(rng), nd(rng), nd(rng)), transNoise * Vec3(nd(rng), nd(rng), nd(rng)));
    }
    // Camera 1 keeps its centre distance to camera 0 (the scale gauge) but rotates.
    p.poses[1].rotation = (quat_exp(angleNoise * Vec3(nd(rng), nd(rng), nd(rng))) * p.poses[1].rotation).normalized();
    p.poses[1].translation = -(p.poses[1].rotation * truth.poses[1].center());
    p.intrinsics.fx *= 1.02;
    p.intrinsics.fy *= 1.02;
    return p;
}

/// Adds isotropic Gaussian pixel noise to every observation.
inline BundleProblem with_pixel_noise(BundleProblem p, std::mt19937_64& rng, double sigma)
{
    std::normal_distribution<double> nd(0.0, sigma);
    for (auto& o : p.observations) o.pixel += Vec2(nd(rng), nd(rng));
    return p;
}

} // namespace carimirror::testing
