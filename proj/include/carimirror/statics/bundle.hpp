// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <carimirror/camera.hpp>
#include <carimirror/statics/capture.hpp>
#include <carimirror/statics/displacement.hpp>

#include <vector>

namespace carimirror {

struct BundleObservation
{
    int point = 0;
    int view = 0;
    Vec2 pixel = Vec2::Zero();
};

/// Points, one shared set of intrinsics and per-view poses.
struct BundleProblem
{
    std::vector<Vec3> points;
    Intrinsics intrinsics;
    std::vector<Pose> poses;
    std::vector<BundleObservation> observations;
};

struct BundleOptions
{
    int maxIterations = 200;
    /// Stop when the relative cost decrease of an accepted step is below this.
    double relativeTolerance = 1e-15;
    bool optimizeFocal = true;
};

struct BundleResult
{
    BundleProblem solution;
    double initialMeanError = 0.0;
    double finalMeanError = 0.0;
    int iterations = 0;
    /// Mesh vertex id of each point when built from a displacement field.
    std::vector<int> vertexIds;
};

/// Sum of squared reprojection errors.
double bundle_cost(const BundleProblem& problem);
/// Mean Euclidean reprojection error in pixels.
double bundle_mean_error(const BundleProblem& problem);

/// Levenberg-Marquardt with a Schur complement on the points. Pose 0 is held fixed and the
/// centre of camera 1 moves on the sphere of its initial distance to camera 0, which fixes the
/// similarity gauge; one focal length (added to fx and fy) is shared by all views.
/// Throws DegenerateError for fewer than 2 views, fewer than 6 usable points or collinear points.
BundleResult bundle_adjust(const BundleProblem& problem, const BundleOptions& options = {});

/// Builds the problem from refined vertices of a displacement field and runs it.
BundleResult bundle_adjust(const DisplacementField& field, const std::vector<CameraModel>& cameras,
                           const TriMesh& coarse, const BundleOptions& options = {});

} // namespace carimirror
