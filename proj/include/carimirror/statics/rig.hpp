// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <carimirror/mesh.hpp>

#include <vector>

namespace carimirror {

struct RefineOptions
{
    int rounds = 3;
    /// Soft weight of each nearest-point constraint.
    double weight = 10.0;
};

/// Deforms the coarse mesh towards the cloud: each vertex is pulled to its nearest cloud point,
/// re-matched for `rounds` rounds. Zero weight returns the coarse mesh unchanged.
TriMesh refine_neutral(const TriMesh& coarse, const std::vector<Vec3>& cloud, const RefineOptions& options = {});

/// User rig: shape 0 is b0, shape k transfers template b0 -> template b_k onto b0.
BlendshapeRig build_blendshapes(const TriMesh& b0, const BlendshapeRig& templateRig);

} // namespace carimirror
