// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#include <carimirror/error.hpp>
#include <carimirror/raster.hpp>
#include <carimirror/tracking/tracker.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

namespace carimirror {

namespace {

using Basis = Eigen::Matrix<double, 3, Eigen::Dynamic>;

void check_frame(const TrackingModel& model, const FrameObservation& frame)
{
    if (frame.image.empty() || frame.image.channels() != 1) throw InvalidInput("tracker: frame must be a non-empty gray image");
    if (frame.landmarks.size() != model.landmark_vertices().size()) {
        throw InvalidInput("tracker: frame has " + std::to_string(frame.landmarks.size()) + " landmarks, model expects " +
                           std::to_string(model.landmark_vertices().size()));
    }
}

void check_weights(const TrackingModel& model, const Eigen::VectorXd& w)
{
    if (w.size() != model.weight_count()) throw InvalidInput("tracker: weight vector has the wrong length");
}

/// Derivatives of a projected camera-space point w.r.t. rotation increment and translation.
Eigen::Matrix<double, 2, 6> pose_jacobian(const Intrinsics& K, const Vec3& rotated, const Vec3& pc)
{
    const Eigen::Matrix<double, 2, 3> Jp = project_jacobian(K, pc);
    Eigen::Matrix<double, 2, 6> J;
    J.leftCols<3>() = -Jp * skew(rotated);
    J.rightCols<3>() = Jp;
    return J;
}

/// Shared linearization of the landmark residuals r = Pi(R F + t) - u.
struct FeaLinearization
{
    Eigen::VectorXd residual;
    Eigen::MatrixXd poseJ;
    Eigen::MatrixXd weightJ;
};

FeaLinearization linearize_fea(const TrackingModel& model, const Pose& pose, const Eigen::VectorXd& w,
                               const FrameObservation& frame, bool withJacobian)
{
    const auto& ids = model.landmark_vertices();
    const int L = static_cast<int>(ids.size());
    const int n = model.weight_count();
    FeaLinearization out;
    out.residual.resize(2 * L);
    if (withJacobian) {
        out.poseJ.resize(2 * L, 6);
        out.weightJ.resize(2 * L, n);
    }
    const Mat3 R = pose.R();
    for (int i = 0; i < L; ++i) {
        const int v = ids[static_cast<size_t>(i)];
        const Vec3 X = model.rig().evaluate_vertex(v, w);
        const Vec3 rotated = R * X;
        const Vec3 pc = rotated + pose.translation;
        out.residual.segment<2>(2 * i) = project(model.intrinsics(), pc) - frame.landmarks[static_cast<size_t>(i)];
        if (withJacobian) {
            out.poseJ.middleRows<2>(2 * i) = pose_jacobian(model.intrinsics(), rotated, pc);
            out.weightJ.middleRows<2>(2 * i) = project_jacobian(model.intrinsics(), pc) * R * model.rig().vertex_basis(v);
        }
    }
    return out;
}

struct FlowLinearization
{
    Eigen::VectorXd residual;
    Eigen::MatrixXd poseJ;
    Eigen::MatrixXd weightJ;
};

Vec3 surface_point(const TrackingModel& model, const Eigen::MatrixX3d& V, const SurfacePoint& p)
{
    const Face& f = model.rig().neutral().faces()[static_cast<size_t>(p.face)];
    return p.bary[0] * V.row(f[0]).transpose() + p.bary[1] * V.row(f[1]).transpose() + p.bary[2] * V.row(f[2]).transpose();
}

FlowLinearization linearize_flow(const TrackingModel& model, const Pose& pose, const Eigen::VectorXd& w,
                                 const FrameObservation& frame, const std::vector<int>& samples, bool withJacobian)
{
    const int n = model.weight_count();
    const Mat3 R = pose.R();
    const Image& img = frame.image;
    const Eigen::VectorXd X = model.texel_positions(w);
    const Eigen::Index rows = 2 * static_cast<Eigen::Index>(samples.size());
    FlowLinearization out;
    out.residual.resize(rows);
    if (withJacobian) {
        out.poseJ.resize(rows, 6);
        out.weightJ.resize(rows, n);
    }
    Eigen::RowVectorXd dW[3];
    for (auto& d : dW) d.resize(n);
    Eigen::Index m = 0;
    for (int s : samples) {
        if (s < 0 || s >= static_cast<int>(model.samples().size())) throw InvalidInput("energy_flow: sample index out of range");
        const FlowSample& sample = model.samples()[static_cast<size_t>(s)];
        double intensity[3];
        Eigen::Matrix<double, 1, 6> dPose[3];
        bool inside = true;
        for (int k = 0; k < 3 && inside; ++k) {
            const int texel = sample.texels[static_cast<size_t>(k)];
            const Vec3 rotated = R * X.segment<3>(3 * texel);
            const Vec3 pc = rotated + pose.translation;
            if (!(pc.z() < 0.0)) {
                inside = false;
                break;
            }
            const Vec2 u = project(model.intrinsics(), pc);
            if (!img.contains(u.x(), u.y())) {
                inside = false;
                break;
            }
            double gx = 0.0;
            double gy = 0.0;
            intensity[k] = img.sample(u.x(), u.y(), 0, gx, gy);
            if (withJacobian) {
                const Eigen::RowVector2d grad(gx, gy);
                dPose[k] = grad * pose_jacobian(model.intrinsics(), rotated, pc);
                const Eigen::RowVector3d a = grad * project_jacobian(model.intrinsics(), pc) * R;
                dW[k].noalias() = a * model.texel_basis(texel);
            }
        }
        if (!inside) continue;
        for (int a = 0; a < 2; ++a, ++m) {
            out.residual[m] = sample.albedoDiff[a] - (intensity[a + 1] - intensity[0]);
            if (withJacobian) {
                out.poseJ.row(m) = -(dPose[a + 1] - dPose[0]);
                out.weightJ.row(m) = -(dW[a + 1] - dW[0]);
            }
        }
    }
    out.residual.conservativeResize(m);
    if (withJacobian) {
        out.poseJ.conservativeResize(m, 6);
        out.weightJ.conservativeResize(m, n);
    }
    return out;
}

void fill_gradient(EnergyGradient* gradient, const Eigen::MatrixXd& poseJ, const Eigen::MatrixXd& weightJ,
                   const Eigen::VectorXd& r)
{
    if (gradient == nullptr) return;
    const Eigen::Matrix<double, 6, 1> gp = 2.0 * poseJ.transpose() * r;
    gradient->rotation = gp.head<3>();
    gradient->translation = gp.tail<3>();
    gradient->weights = 2.0 * weightJ.transpose() * r;
}

/// Translation that places the rotated points in front of the camera with the observed 2D centroid and spread.
Vec3 initial_translation(std::span<const Vec3> points, std::span<const Vec2> observed, const Intrinsics& K, const Mat3& R)
{
    Vec3 c3 = Vec3::Zero();
    Vec2 c2 = Vec2::Zero();
    for (size_t i = 0; i < points.size(); ++i) {
        c3 += R * points[i];
        c2 += observed[i];
    }
    c3 /= static_cast<double>(points.size());
    c2 /= static_cast<double>(points.size());
    double spread3 = 0.0;
    double spread2 = 0.0;
    for (size_t i = 0; i < points.size(); ++i) {
        spread3 += ((R * points[i]).head<2>() - c3.head<2>()).squaredNorm();
        spread2 += (observed[i] - c2).squaredNorm();
    }
    if (!(spread2 > 0.0) || !(spread3 > 0.0)) throw DegenerateError("estimate_pose: landmarks have no spread");
    const double f = 0.5 * (K.fx + K.fy);
    const double depth = f * std::sqrt(spread3 / spread2);
    return {(c2.x() - K.cx) * depth / K.fx - c3.x(), (K.cy - c2.y()) * depth / K.fy - c3.y(), -depth - c3.z()};
}

} // namespace

void TrackingWeights::validate() const
{
    if (!(flow >= 0.0) || !(spa >= 0.0) || !(sm >= 0.0)) throw InvalidInput("TrackingWeights: weights must be nonnegative");
}

TrackingModel::TrackingModel(BlendshapeRig rig, Eigen::MatrixX2d uv, std::vector<int> landmarkVertices, const Image& albedo,
                             Intrinsics intrinsics, int stride)
    : m_rig(std::move(rig)), m_uv(std::move(uv)), m_landmarks(std::move(landmarkVertices)), m_intrinsics(intrinsics)
{
    if (m_rig.shapes().empty()) throw InvalidInput("TrackingModel: empty rig");
    if (m_uv.rows() != m_rig.vertex_count()) throw InvalidInput("TrackingModel: uv count differs from vertex count");
    if (m_landmarks.empty()) throw InvalidInput("TrackingModel: no landmark vertices");
    for (int v : m_landmarks) {
        if (v < 0 || v >= m_rig.vertex_count()) throw InvalidInput("TrackingModel: landmark vertex out of range");
    }
    if (albedo.empty()) throw InvalidInput("TrackingModel: empty albedo texture");
    if (stride < 1) throw InvalidInput("TrackingModel: stride must be positive");
    if (!(intrinsics.fx > 0.0) || !(intrinsics.fy > 0.0)) throw InvalidInput("TrackingModel: focal lengths must be positive");

    const Image gray = albedo.channels() == 1 ? albedo : albedo.to_gray();
    const int W = gray.width();
    const int H = gray.height();
    const ChartRaster chart = rasterize_chart(m_uv, m_rig.neutral().faces(), W, H);
    const auto at = [&](int x, int y) {
        const size_t i = static_cast<size_t>(chart.index(x, y));
        return SurfacePoint{chart.face[i], chart.bary[i]};
    };
    // Neighbouring samples share texel points, so positions and bases are tabulated per texel.
    std::vector<int> texelRow(static_cast<size_t>(W * H), -1);
    std::vector<SurfacePoint> texels;
    const auto texel = [&](int x, int y) {
        int& row = texelRow[static_cast<size_t>(chart.index(x, y))];
        if (row < 0) {
            row = static_cast<int>(texels.size());
            texels.push_back(at(x, y));
        }
        return row;
    };
    for (int y = 0; y + 1 < H; y += stride) {
        for (int x = 0; x + 1 < W; x += stride) {
            if (!chart.covered(x, y) || !chart.covered(x + 1, y) || !chart.covered(x, y + 1)) continue;
            FlowSample s;
            s.points = {at(x, y), at(x + 1, y), at(x, y + 1)};
            s.texels = {texel(x, y), texel(x + 1, y), texel(x, y + 1)};
            s.albedoDiff = Vec2(gray.at(x + 1, y) - gray.at(x, y), gray.at(x, y + 1) - gray.at(x, y));
            m_samples.push_back(s);
        }
    }
    const Eigen::Index P = static_cast<Eigen::Index>(texels.size());
    m_texelRest.resize(3 * P);
    m_texelBasis.resize(3 * P, weight_count());
    for (Eigen::Index i = 0; i < P; ++i) {
        const SurfacePoint& p = texels[static_cast<size_t>(i)];
        m_texelRest.segment<3>(3 * i) = point(p, Eigen::VectorXd::Zero(weight_count()));
        m_texelBasis.middleRows<3>(3 * i) = point_basis(p);
    }
}

Vec3 TrackingModel::point(const SurfacePoint& p, const Eigen::VectorXd& w) const
{
    const Face& f = m_rig.neutral().faces()[static_cast<size_t>(p.face)];
    Vec3 x = Vec3::Zero();
    for (int k = 0; k < 3; ++k) x += p.bary[k] * m_rig.evaluate_vertex(f[static_cast<size_t>(k)], w);
    return x;
}

Basis TrackingModel::point_basis(const SurfacePoint& p) const
{
    const Face& f = m_rig.neutral().faces()[static_cast<size_t>(p.face)];
    return p.bary[0] * m_rig.vertex_basis(f[0]) + p.bary[1] * m_rig.vertex_basis(f[1]) + p.bary[2] * m_rig.vertex_basis(f[2]);
}

Vec3 TrackingModel::normal(const SurfacePoint& p, const Eigen::VectorXd& w) const
{
    const Face& f = m_rig.neutral().faces()[static_cast<size_t>(p.face)];
    const Vec3 a = m_rig.evaluate_vertex(f[0], w);
    const Vec3 b = m_rig.evaluate_vertex(f[1], w);
    const Vec3 c = m_rig.evaluate_vertex(f[2], w);
    return (b - a).cross(c - a).normalized();
}

double energy_fea(const TrackingModel& model, const Pose& pose, const Eigen::VectorXd& w, const FrameObservation& frame,
                  EnergyGradient* gradient)
{
    check_frame(model, frame);
    check_weights(model, w);
    const FeaLinearization lin = linearize_fea(model, pose, w, frame, gradient != nullptr);
    fill_gradient(gradient, lin.poseJ, lin.weightJ, lin.residual);
    return lin.residual.squaredNorm();
}

std::vector<int> visible_samples(const TrackingModel& model, const Pose& pose, const Eigen::VectorXd& w,
                                 const FrameObservation& frame)
{
    check_frame(model, frame);
    check_weights(model, w);
    const Vec3 center = pose.center();
    const Image& img = frame.image;
    const TriMesh mesh = model.rig().neutral().with_vertices(model.rig().evaluate(w));
    const RasterBuffer buffer = rasterize(mesh.vertices(), mesh.faces(), model.intrinsics(), pose, img.width(), img.height());
    const double tolerance = 0.005 * mesh.bbox_diagonal();
    // The bilinear footprint must show the same surface, otherwise the sample mixes in an occluder or background.
    const auto unoccluded = [&](const Vec3& pc) {
        const Vec2 u = project(model.intrinsics(), pc);
        if (!(pc.z() < 0.0) || !img.contains(u.x(), u.y())) return false;
        const int x0 = static_cast<int>(std::floor(u.x()));
        const int y0 = static_cast<int>(std::floor(u.y()));
        for (int dy = 0; dy <= 1; ++dy) {
            for (int dx = 0; dx <= 1; ++dx) {
                const int sx = std::min(x0 + dx, img.width() - 1);
                const int sy = std::min(y0 + dy, img.height() - 1);
                const double depth = buffer.depth[static_cast<size_t>(sy * buffer.width + sx)];
                if (!(std::abs(depth + pc.z()) <= tolerance)) return false;
            }
        }
        return true;
    };
    std::vector<int> out;
    for (size_t s = 0; s < model.samples().size(); ++s) {
        const FlowSample& sample = model.samples()[s];
        const Vec3 X = surface_point(model, mesh.vertices(), sample.points[0]);
        if (face_normal_raw(mesh.vertices(), mesh.faces()[static_cast<size_t>(sample.points[0].face)]).dot(center - X) <= 0.0) continue;
        bool visible = true;
        for (const SurfacePoint& p : sample.points) visible = visible && unoccluded(pose.apply(surface_point(model, mesh.vertices(), p)));
        if (visible) out.push_back(static_cast<int>(s));
    }
    return out;
}

double energy_flow(const TrackingModel& model, const Pose& pose, const Eigen::VectorXd& w, const FrameObservation& frame,
                   const std::vector<int>& samples, EnergyGradient* gradient)
{
    check_frame(model, frame);
    check_weights(model, w);
    const FlowLinearization lin = linearize_flow(model, pose, w, frame, samples, gradient != nullptr);
    fill_gradient(gradient, lin.poseJ, lin.weightJ, lin.residual);
    return lin.residual.squaredNorm();
}

double energy_sm(const Eigen::VectorXd& w, const std::vector<Eigen::VectorXd>& history)
{
    if (history.size() < 2) return 0.0;
    if (history[0].size() != w.size() || history[1].size() != w.size()) throw InvalidInput("energy_sm: history length mismatch");
    return (history[1] - 2.0 * history[0] + w).squaredNorm();
}

double tracking_energy(const TrackingModel& model, const Pose& pose, const Eigen::VectorXd& w,
                       const FrameObservation& frame, const std::vector<int>& samples, const TrackingWeights& weights,
                       const std::vector<Eigen::VectorXd>& history)
{
    weights.validate();
    double e = energy_fea(model, pose, w, frame);
    if (weights.flow > 0.0) e += weights.flow * energy_flow(model, pose, w, frame, samples);
    e += weights.spa * w.lpNorm<1>();
    if (weights.sm > 0.0) e += weights.sm * energy_sm(w, history);
    return e;
}

Pose estimate_pose(const TrackingModel& model, const FrameObservation& frame, const Eigen::VectorXd& w, const Pose& init)
{
    check_frame(model, frame);
    check_weights(model, w);
    const auto& ids = model.landmark_vertices();
    std::vector<Vec3> points;
    points.reserve(ids.size());
    for (int v : ids) points.push_back(model.rig().evaluate_vertex(v, w));
    if (points.size() < 4) throw DegenerateError("estimate_pose: fewer than 4 landmark vertices");
    Vec3 mean = Vec3::Zero();
    for (const Vec3& p : points) mean += p;
    mean /= static_cast<double>(points.size());
    Mat3 scatter = Mat3::Zero();
    for (const Vec3& p : points) scatter += (p - mean) * (p - mean).transpose();
    const Vec3 sv = Eigen::SelfAdjointEigenSolver<Mat3>(scatter).eigenvalues();
    if (!(sv[0] > 1e-12 * sv[2])) throw DegenerateError("estimate_pose: landmark vertices are coplanar");

    Pose start = init;
    if (!std::isfinite(reprojection_cost(points, frame.landmarks, model.intrinsics(), start))) {
        start.translation = initial_translation(points, frame.landmarks, model.intrinsics(), start.R());
    }
    return fit_pose(points, frame.landmarks, model.intrinsics(), start, 10, 1e-8).pose;
}

ShootingResult solve_shooting(const Eigen::MatrixXd& H, const Eigen::VectorXd& g, double lambda,
                              const Eigen::VectorXd& wInit, int maxSweeps, double tolerance)
{
    const Eigen::Index n = g.size();
    if (H.rows() != n || H.cols() != n || wInit.size() != n) throw InvalidInput("solve_shooting: size mismatch");
    if (!(lambda >= 0.0)) throw InvalidInput("solve_shooting: lambda must be nonnegative");
    ShootingResult out;
    out.w = wInit.cwiseMax(0.0).cwiseMin(1.0);
    // Hw is kept up to date so each coordinate update is O(n).
    Eigen::VectorXd Hw = H * out.w;
    for (int sweep = 0; sweep < maxSweeps; ++sweep) {
        double largest = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double hii = H(i, i);
            const double rho = g[i] - (Hw[i] - hii * out.w[i]);
            double next;
            if (hii > 0.0) {
                // Minimize hii w^2 - 2 rho w + lambda |w|: soft-threshold, then clamp to the box.
                const double shrunk = std::copysign(std::max(std::abs(rho) - 0.5 * lambda, 0.0), rho);
                next = std::clamp(shrunk / hii, 0.0, 1.0);
            } else {
                next = 2.0 * rho > lambda ? 1.0 : 0.0;
            }
            const double delta = next - out.w[i];
            if (delta != 0.0) {
                Hw += delta * H.col(i);
                out.w[i] = next;
                largest = std::max(largest, std::abs(delta));
            }
        }
        out.sweeps = sweep + 1;
        if (largest < tolerance) break;
    }
    return out;
}

Eigen::VectorXd solve_weights_shooting(const TrackingModel& model, const FrameObservation& frame, const Pose& pose,
                                       const Eigen::VectorXd& wInit, const TrackingWeights& weights,
                                       const std::vector<Eigen::VectorXd>& history, const std::vector<int>& samples,
                                       const WeightSolveOptions& options)
{
    check_frame(model, frame);
    check_weights(model, wInit);
    weights.validate();
    const int n = model.weight_count();
    const bool smooth = history.size() >= 2 && weights.sm > 0.0;
    Eigen::VectorXd w = wInit.cwiseMax(0.0).cwiseMin(1.0);
    double energy = tracking_energy(model, pose, w, frame, samples, weights, history);
    for (int it = 0; it < options.linearizations; ++it) {
        const FeaLinearization fea = linearize_fea(model, pose, w, frame, true);
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
        H.selfadjointView<Eigen::Lower>().rankUpdate(fea.weightJ.transpose());
        Eigen::VectorXd g = fea.weightJ.transpose() * (fea.weightJ * w - fea.residual);
        if (weights.flow > 0.0) {
            const FlowLinearization flow = linearize_flow(model, pose, w, frame, samples, true);
            H.selfadjointView<Eigen::Lower>().rankUpdate(flow.weightJ.transpose(), weights.flow);
            g += weights.flow * flow.weightJ.transpose() * (flow.weightJ * w - flow.residual);
        }
        H.triangularView<Eigen::StrictlyUpper>() = H.transpose();
        if (smooth) {
            const Eigen::VectorXd a = history[1] - 2.0 * history[0];
            H += weights.sm * Eigen::MatrixXd::Identity(n, n);
            g -= weights.sm * a;
        }
        const Eigen::VectorXd target = solve_shooting(H, g, weights.spa, w, options.maxSweeps, options.tolerance).w;
        bool accepted = false;
        Eigen::VectorXd step = target - w;
        for (int h = 0; h < 8 && !accepted; ++h, step *= 0.5) {
            const Eigen::VectorXd cand = w + step;
            const double e = tracking_energy(model, pose, cand, frame, samples, weights, history);
            if (e <= energy) {
                accepted = true;
                w = cand;
                energy = e;
            }
        }
        if (!accepted || step.cwiseAbs().maxCoeff() < options.tolerance) break;
    }
    return w;
}

TrackResult track_frame(const TrackingModel& model, const FrameObservation& frame, const TrackerState& state,
                        const TrackingWeights& weights, const TrackOptions& options)
{
    check_frame(model, frame);
    weights.validate();
    if (options.alternations < 1) throw InvalidInput("track_frame: at least one alternation");
    const int n = model.weight_count();
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd w = state.weights.size() == n ? state.weights : zero;
    const std::vector<Eigen::VectorXd>& history = state.history;

    TrackResult out;
    // First alternation: pose with w = 0, then shooting warm-started from the previous frame.
    Pose pose = estimate_pose(model, frame, zero, state.pose);
    const std::vector<int> samples = visible_samples(model, pose, w, frame);
    w = solve_weights_shooting(model, frame, pose, w, weights, history, samples, options.weightSolve);
    double energy = tracking_energy(model, pose, w, frame, samples, weights, history);
    out.energies.push_back(energy);
    for (int a = 1; a < options.alternations; ++a) {
        const Pose cand = estimate_pose(model, frame, w, pose);
        const double e = tracking_energy(model, cand, w, frame, samples, weights, history);
        if (e <= energy) {
            pose = cand;
            energy = e;
        }
        w = solve_weights_shooting(model, frame, pose, w, weights, history, samples, options.weightSolve);
        energy = tracking_energy(model, pose, w, frame, samples, weights, history);
        out.energies.push_back(energy);
    }

    out.state.pose = pose;
    out.state.weights = w;
    out.state.frame = state.frame + 1;
    out.state.history.push_back(w);
    if (!history.empty()) out.state.history.push_back(history.front());
    return out;
}

} // namespace carimirror
