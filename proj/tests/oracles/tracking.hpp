// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

// Render-and-recover harness and independent references for the tracker.

#pragma once

#include "support.hpp"

#include <carimirror/pipeline/scene.hpp>
#include <carimirror/raster.hpp>
#include <carimirror/synthetic.hpp>
#include <carimirror/tracking/tracker.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

namespace carimirror::testing {

inline constexpr int kFrameSize = 256;
inline constexpr int kAtlasSize = 64;

inline Image gray_albedo_atlas(int size)
{
    Image img(size, size, 1);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const Vec2 uv = texel_to_uv(x, y, size, size);
            img.at(x, y) = synthetic_albedo(uv.x(), uv.y()).mean();
        }
    }
    return img;
}

struct Harness
{
    explicit Harness(const SyntheticFaceModel& faceModel = default_face_model(), int frameSize = kFrameSize)
        : face(faceModel), size(frameSize)
    {
    }

    const SyntheticFaceModel& face;
    int size;
    BlendshapeRig rig = face.template_rig();
    Intrinsics K = default_intrinsics(size, size);
    double distance = default_face_distance(K, size);
    TrackingModel model{rig, face.uv(), face.landmarks().indices, gray_albedo_atlas(kAtlasSize), K};

    FrameObservation frame(const Pose& pose, const Eigen::VectorXd& w, int index = 0) const
    {
        const TriMesh mesh = rig.neutral().with_vertices(rig.evaluate(w));
        const CameraModel cam{K, pose};
        FrameObservation f;
        f.image = render_view(mesh, face.uv(), cam, size, size, ambient_lighting(),
                              [](double u, double v) { return synthetic_albedo(u, v); }, 1);
        f.landmarks = project_landmarks(mesh, face.landmarks(), cam);
        f.index = index;
        return f;
    }

    Eigen::VectorXd zero() const { return Eigen::VectorXd::Zero(rig.expression_count()); }
};

inline const Harness& harness()
{
    static const Harness h;
    return h;
}

inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b)
{
    return (a - b).norm() / std::max(1e-12, b.norm());
}

inline Eigen::VectorXd stack(const EnergyGradient& g)
{
    Eigen::VectorXd v(6 + g.weights.size());
    v << g.rotation, g.translation, g.weights;
    return v;
}

/// Central differences of an energy over (rotation increment, translation, weights).
template <typename Energy>
Eigen::VectorXd numeric_gradient(const Energy& energy, const Pose& pose, const Eigen::VectorXd& w, double h)
{
    Eigen::VectorXd out(6 + w.size());
    for (int i = 0; i < 6; ++i) {
        Vec3 dr = Vec3::Zero();
        Vec3 dt = Vec3::Zero();
        (i < 3 ? dr : dt)[i % 3] = h;
        out[i] = (energy(perturb(pose, dr, dt), w) - energy(perturb(pose, -dr, -dt), w)) / (2.0 * h);
    }
    for (int k = 0; k < w.size(); ++k) {
        Eigen::VectorXd wp = w;
        Eigen::VectorXd wm = w;
        wp[k] += h;
        wm[k] -= h;
        out[6 + k] = (energy(pose, wp) - energy(pose, wm)) / (2.0 * h);
    }
    return out;
}

inline Eigen::VectorXd sparse_weights(int n, std::initializer_list<std::pair<int, double>> entries)
{
    Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
    for (const auto& [k, v] : entries) w[k] = v;
    return w;
}

/// Projected gradient on the box, run to a tight tolerance; independent of coordinate descent.
inline Eigen::VectorXd projected_gradient(const Eigen::MatrixXd& H, const Eigen::VectorXd& g, double lambda)
{
    const double L = 2.0 * Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(H).eigenvalues().maxCoeff();
    Eigen::VectorXd w = Eigen::VectorXd::Constant(g.size(), 0.5);
    for (int it = 0; it < 2000000; ++it) {
        // On the box w >= 0 the L1 term is linear, so the objective is smooth there.
        const Eigen::VectorXd grad = 2.0 * (H * w - g) + Eigen::VectorXd::Constant(g.size(), lambda);
        const Eigen::VectorXd next = (w - grad / L).cwiseMax(0.0).cwiseMin(1.0);
        const double change = (next - w).cwiseAbs().maxCoeff();
        w = next;
        if (change < 1e-13) break;
    }
    return w;
}

inline double box_objective(const Eigen::MatrixXd& H, const Eigen::VectorXd& g, double lambda, const Eigen::VectorXd& w)
{
    return w.dot(H * w) - 2.0 * g.dot(w) + lambda * w.lpNorm<1>();
}

struct Instance
{
    Eigen::MatrixXd H;
    Eigen::VectorXd g;
};

inline Instance random_instance(std::mt19937_64& rng, int n, int m)
{
    std::normal_distribution<double> nd;
    Eigen::MatrixXd A(m, n);
    Eigen::VectorXd y(m);
    for (int i = 0; i < m; ++i) {
        y[i] = nd(rng);
        for (int j = 0; j < n; ++j) A(i, j) = nd(rng);
    }
    return {A.transpose() * A, A.transpose() * y};
}

/// Ground truth of the smooth 30-frame test sequence: head sweep plus three active weights.
struct SequenceFrame
{
    Pose pose;
    Eigen::VectorXd weights;
};

inline SequenceFrame sequence_truth(int k, int frames, int weightCount, double distance)
{
    const double t = static_cast<double>(k) / (frames - 1);
    SequenceFrame f;
    f.pose = look_at_face(20.0 * std::sin(2.0 * std::numbers::pi * t), 8.0 * std::sin(std::numbers::pi * t), distance);
    f.weights = Eigen::VectorXd::Zero(weightCount);
    f.weights[0] = 0.5 + 0.4 * std::sin(2.0 * std::numbers::pi * t);
    f.weights[3] = 0.6 * t;
    f.weights[43] = 0.3 * (1.0 - std::cos(2.0 * std::numbers::pi * t));
    return f;
}

} // namespace carimirror::testing
