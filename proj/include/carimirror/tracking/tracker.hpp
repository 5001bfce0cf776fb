// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <carimirror/camera.hpp>
#include <carimirror/image.hpp>
#include <carimirror/mesh.hpp>

#include <array>
#include <vector>

namespace carimirror {

struct FrameObservation
{
    /// One-channel gray-scale, linear [0,1].
    Image image;
    std::vector<Vec2> landmarks;
    int index = 0;
};

struct TrackingWeights
{
    double flow = 1.0;
    double spa = 10.0;
    double sm = 0.001;

    void validate() const;
};

struct TrackerState
{
    Pose pose;
    Eigen::VectorXd weights;
    /// Most recent first: history[0] = w^{k-1}, history[1] = w^{k-2}.
    std::vector<Eigen::VectorXd> history;
    /// Index of the last tracked frame, -1 before the first.
    int frame = -1;
};

/// Surface point on the albedo chart: barycentric position on one mesh face.
struct SurfacePoint
{
    int face = -1;
    Vec3 bary = Vec3::Zero();
};

/// One flow sample: a base texel and its right and lower neighbours.
struct FlowSample
{
    std::array<SurfacePoint, 3> points;
    /// Rows of the model's texel point table for the three points.
    std::array<int, 3> texels = {-1, -1, -1};
    /// Albedo differences: right - base, lower - base.
    Vec2 albedoDiff = Vec2::Zero();
};

/// Everything the tracker needs that does not change between frames.
class TrackingModel
{
public:
    /// `albedo` is the gray or colour albedo atlas; `stride` subsamples the texel lattice.
    TrackingModel(BlendshapeRig rig, Eigen::MatrixX2d uv, std::vector<int> landmarkVertices, const Image& albedo,
                  Intrinsics intrinsics, int stride = 2);

    const BlendshapeRig& rig() const { return m_rig; }
    const Eigen::MatrixX2d& uv() const { return m_uv; }
    const std::vector<int>& landmark_vertices() const { return m_landmarks; }
    const Intrinsics& intrinsics() const { return m_intrinsics; }
    const std::vector<FlowSample>& samples() const { return m_samples; }
    int weight_count() const { return m_rig.expression_count(); }

    /// Surface position for weights w.
    Vec3 point(const SurfacePoint& p, const Eigen::VectorXd& w) const;
    /// 3 x n derivative of point() w.r.t. w.
    Eigen::Matrix<double, 3, Eigen::Dynamic> point_basis(const SurfacePoint& p) const;
    /// Unit normal of the deformed face carrying the point.
    Vec3 normal(const SurfacePoint& p, const Eigen::VectorXd& w) const;

    int texel_count() const { return static_cast<int>(m_texelRest.size() / 3); }
    /// Positions of every texel point for weights w, stacked as (x0 y0 z0 x1 ...).
    Eigen::VectorXd texel_positions(const Eigen::VectorXd& w) const { return m_texelRest + m_texelBasis * w; }
    /// 3 x n derivative of texel point i w.r.t. w.
    auto texel_basis(int i) const { return m_texelBasis.middleRows<3>(3 * i); }

private:
    BlendshapeRig m_rig;
    Eigen::MatrixX2d m_uv;
    std::vector<int> m_landmarks;
    Intrinsics m_intrinsics;
    std::vector<FlowSample> m_samples;
    Eigen::VectorXd m_texelRest;
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> m_texelBasis;
};

/// Gradient of an energy w.r.t. a left rotation increment, translation and weights.
struct EnergyGradient
{
    Vec3 rotation = Vec3::Zero();
    Vec3 translation = Vec3::Zero();
    Eigen::VectorXd weights;
};

double energy_fea(const TrackingModel& model, const Pose& pose, const Eigen::VectorXd& w, const FrameObservation& frame,
                  EnergyGradient* gradient = nullptr);

/// Indices of samples whose base point faces the camera and whose three points are unoccluded inside the frame.
std::vector<int> visible_samples(const TrackingModel& model, const Pose& pose, const Eigen::VectorXd& w,
                                 const FrameObservation& frame);

/// Flow energy over a fixed sample set; samples that project off-image are dropped.
double energy_flow(const TrackingModel& model, const Pose& pose, const Eigen::VectorXd& w, const FrameObservation& frame,
                   const std::vector<int>& samples, EnergyGradient* gradient = nullptr);

/// |w^{k-2} - 2 w^{k-1} + w|^2, or 0 with fewer than two history entries.
double energy_sm(const Eigen::VectorXd& w, const std::vector<Eigen::VectorXd>& history);

double tracking_energy(const TrackingModel& model, const Pose& pose, const Eigen::VectorXd& w,
                       const FrameObservation& frame, const std::vector<int>& samples, const TrackingWeights& weights,
                       const std::vector<Eigen::VectorXd>& history);

/// Gauss-Newton on energy_fea over the pose with w frozen.
/// Throws DegenerateError with fewer than 4 non-coplanar landmark vertices.
Pose estimate_pose(const TrackingModel& model, const FrameObservation& frame, const Eigen::VectorXd& w, const Pose& init);

struct ShootingResult
{
    Eigen::VectorXd w;
    int sweeps = 0;
};

/// Coordinate descent on w^T H w - 2 g^T w + lambda |w|_1 over the box [0,1]^n.
ShootingResult solve_shooting(const Eigen::MatrixXd& H, const Eigen::VectorXd& g, double lambda,
                              const Eigen::VectorXd& wInit, int maxSweeps = 100, double tolerance = 1e-6);

struct WeightSolveOptions
{
    /// Re-linearizations of the landmark and flow residuals.
    int linearizations = 5;
    int maxSweeps = 100;
    double tolerance = 1e-6;
};

/// Weights with the pose fixed: linearize, shoot, accept only if the full energy does not increase.
Eigen::VectorXd solve_weights_shooting(const TrackingModel& model, const FrameObservation& frame, const Pose& pose,
                                       const Eigen::VectorXd& wInit, const TrackingWeights& weights,
                                       const std::vector<Eigen::VectorXd>& history, const std::vector<int>& samples,
                                       const WeightSolveOptions& options = {});

struct TrackOptions
{
    int alternations = 3;
    WeightSolveOptions weightSolve;
};

struct TrackResult
{
    TrackerState state;
    /// Total energy after each alternation.
    std::vector<double> energies;
};

/// One frame: alternate pose and weight solves; shifts the weight history.
TrackResult track_frame(const TrackingModel& model, const FrameObservation& frame, const TrackerState& state,
                        const TrackingWeights& weights = {}, const TrackOptions& options = {});

} // namespace carimirror
