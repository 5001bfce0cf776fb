// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <carimirror/camera.hpp>
#include <carimirror/statics/capture.hpp>

#include <vector>

namespace carimirror {

/// Per-vertex, per-view 2D corrections of the coarse projections. Entry (i, j) lives at i * views + j.
struct DisplacementField
{
    int vertexCount = 0;
    int viewCount = 0;
    /// Projection u_i^j of the coarse vertex.
    std::vector<Vec2> base;
    std::vector<Vec2> delta;
    std::vector<char> visible;
    /// Set when the optimized sample hit the image border and was clamped.
    std::vector<char> clamped;
    /// View with the smallest normal/view-ray angle; -1 when the vertex is seen nowhere.
    std::vector<int> bestView;
    /// True when the vertex is visible in at least two views.
    std::vector<char> refined;

    size_t at(int vertex, int view) const { return static_cast<size_t>(vertex) * static_cast<size_t>(viewCount) + static_cast<size_t>(view); }
    Vec2 target(int vertex, int view) const { return base[at(vertex, view)] + delta[at(vertex, view)]; }
};

struct DisplacementOptions
{
    double lambdaReg = 0.1;
    int iterations = 10;
    /// Depth-test slack in model units; <= 0 selects 0.5% of the bounding-box diagonal.
    double depthTolerance = 0.0;
    /// A view counts only if the normal/view-ray cosine exceeds this and the bilinear footprint
    /// lies fully on the surface; grazing and silhouette samples are not photo-consistent.
    double minFacingCosine = 0.5;
    /// Gauss-Newton starts from the lowest-energy integer offset within this radius (pixels), which
    /// avoids the local minima of a single-point colour residual. 0 starts from zero.
    int searchRadius = 3;
};

/// Gauss-Newton per visible vertex and view on the photo-consistency energy with the best-view
/// colour as a fixed anchor and bilinear sampling, started from a small exhaustive offset search.
DisplacementField optimize_displacement(const MultiViewCapture& capture, const TriMesh& coarse,
                                        const std::vector<CameraModel>& cameras, const DisplacementOptions& options = {});

} // namespace carimirror
