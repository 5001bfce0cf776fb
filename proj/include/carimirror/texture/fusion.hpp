// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <carimirror/camera.hpp>
#include <carimirror/image.hpp>
#include <carimirror/mesh.hpp>

#include <vector>

namespace carimirror {

/// Integer texel coordinate in a W x H atlas.
struct Texel
{
    int x = 0;
    int y = 0;
};

/// One source view resampled onto the atlas grid.
struct ViewSample
{
    int width = 0;
    int height = 0;
    /// Linear RGB in [0,1], row-major.
    std::vector<Vec3> color;
    /// Outward unit surface normal.
    std::vector<Vec3> normal;
    std::vector<char> valid;
    /// Unit ray from the camera centre towards the surface.
    Vec3 direction = Vec3(0, 0, -1);

    ViewSample() = default;
    ViewSample(int width, int height);

    int index(int x, int y) const { return y * width + x; }
    int index(Texel t) const { return index(t.x, t.y); }
    bool inside(Texel t) const { return t.x >= 0 && t.y >= 0 && t.x < width && t.y < height; }
    bool is_valid(Texel t) const { return inside(t) && valid[static_cast<size_t>(index(t))] != 0; }
    /// Throws InvalidInput on size mismatch, non-unit vectors or out-of-range colours where valid.
    void validate() const;
};

inline constexpr int kUnassigned = -1;

struct LabelMap
{
    int width = 0;
    int height = 0;
    std::vector<int> label;

    int at(int x, int y) const { return label[static_cast<size_t>(y * width + x)]; }
};

struct TextureAtlas
{
    /// Three-channel linear RGB.
    Image color;
    /// Non-zero on face-chart texels.
    std::vector<char> mask;
};

/// Colour disagreement of two views over an adjacent texel pair; +inf if any sample is invalid.
double matching_cost(Texel u1, Texel u2, const ViewSample& viewI, const ViewSample& viewJ);

/// 2 - |n - d|; +inf if the texel is invalid in the view.
double view_cost(Texel u, const ViewSample& view);

struct LabelingOptions
{
    double dataWeight = 1.2;
    int maxSweeps = 10;
    /// Substitute for an infinite pairwise cost when a neighbour lacks a colour in one of the two labels.
    double pairwiseCap = 1e4;
};

struct LabelingResult
{
    LabelMap labels;
    /// Energy of the initial labeling followed by the energy after each sweep.
    std::vector<double> energyHistory;
    int sweeps = 0;
};

/// Texels valid in at least one view.
std::vector<char> coverage_mask(const std::vector<ViewSample>& views);

/// Labeling energy: dataWeight * sum of view costs + sum of pairwise costs over label changes.
double labeling_energy(const LabelMap& labels, const std::vector<ViewSample>& views, const LabelingOptions& options = {});

/// Graph-cut labeling on `mask`; an empty mask means the union of valid texels.
/// Throws InvalidInput listing the mask texels that no view covers.
LabelingResult solve_labeling(const std::vector<ViewSample>& views, const std::vector<char>& mask = {},
                              const LabelingOptions& options = {});

struct PoissonOptions
{
    /// Clamp the result to [0,1].
    bool clamp = true;
};

/// Integrates the labeled views' gradients into the template on every labeled texel.
/// Non-labeled texels copy the template; they supply the Dirichlet boundary.
TextureAtlas poisson_blend(const LabelMap& labels, const std::vector<ViewSample>& views, const TextureAtlas& templ,
                           const PoissonOptions& options = {});

/// Guidance difference v_pq used by poisson_blend for neighbouring texels p, q (q may lie outside the labels).
Vec3 guidance_difference(const LabelMap& labels, const std::vector<ViewSample>& views, Texel p, Texel q);

/// Resamples an image of a mesh onto the atlas grid: depth-tested, front-facing chart texels become valid.
ViewSample sample_view(const TriMesh& mesh, const Eigen::MatrixX2d& uv, const CameraModel& camera, const Image& image,
                       int width, int height);

struct FusionResult
{
    LabelingResult labeling;
    TextureAtlas atlas;
};

/// sample -> label -> blend.
FusionResult fuse_texture(const std::vector<ViewSample>& views, const TextureAtlas& templ,
                          const LabelingOptions& options = {});

} // namespace carimirror
