// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <carimirror/image.hpp>
#include <carimirror/mesh.hpp>
#include <carimirror/synthetic.hpp>

#include <vector>

namespace carimirror {

/// One calibrated-or-not photograph: linear RGB in [0,1] plus 2D landmarks in pixels.
struct CaptureView
{
    Image image;
    std::vector<Vec2> landmarks;
};

struct MultiViewCapture
{
    std::vector<CaptureView> views;

    int view_count() const { return static_cast<int>(views.size()); }
    /// Throws InvalidInput on empty input, mismatched landmark counts or mixed channel layouts.
    void validate(int landmarkCount) const;
};

/// Linear shape basis used by the coarse fit: mean + identity * a + expression * b.
struct ParametricBasis
{
    TriMesh mean;
    /// 3V x k, vertex-major.
    Eigen::MatrixXd identity;
    Eigen::MatrixXd expression;
    LandmarkSet landmarks;
    Eigen::MatrixX2d uv;

    static ParametricBasis from_synthetic(const SyntheticFaceModel& model);
    Eigen::MatrixX3d evaluate(const Eigen::VectorXd& identityCoeffs, const Eigen::VectorXd& expressionCoeffs) const;
};

} // namespace carimirror
