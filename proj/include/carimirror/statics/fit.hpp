// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <carimirror/camera.hpp>
#include <carimirror/statics/capture.hpp>
#include <carimirror/statics/lighting.hpp>

#include <optional>
#include <vector>

namespace carimirror {

/// Gray-scale albedo per vertex and resampled on the texel grid of the (u, v) chart.
struct AlbedoMap
{
    Eigen::VectorXd vertex;
    Image texture;
};

struct FitOptions
{
    /// Held fixed during the coarse fit. When unset, f = 1.5 * image width and the principal point is centred.
    std::optional<Intrinsics> intrinsics;
    int outerIterations = 12;
    int lmStepsPerIteration = 3;
    double landmarkWeight = 1.0;
    double photoWeight = 10.0;
    /// Ridge weight on identity and expression coefficients.
    double regularization = 1.0;
    std::vector<double> initialYawsDeg = {-45.0, -30.0, -15.0, 0.0, 15.0, 30.0, 45.0};
    int albedoTextureSize = 128;
};

struct FitResult
{
    Eigen::VectorXd identity;
    Eigen::VectorXd expression;
    std::vector<CameraModel> cameras;
    /// One lighting estimate per view.
    std::vector<SHLighting> lighting;
    AlbedoMap albedo;
    TriMesh mesh;
    /// Total energy after initialization and after every outer iteration.
    std::vector<double> energy;
    /// Root-mean-square landmark reprojection error over all views, pixels.
    double landmarkRmse = 0.0;
};

/// Coarse fit of the parametric basis to all views: landmark alignment, SH photo consistency and
/// ridge regularization, minimized by alternating lighting, albedo and Levenberg-Marquardt steps
/// over coefficients and per-view poses. Every accepted update lowers the energy.
FitResult fit_parametric_model(const MultiViewCapture& capture, const ParametricBasis& basis, const FitOptions& options = {});

} // namespace carimirror
