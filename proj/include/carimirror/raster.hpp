// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <carimirror/camera.hpp>
#include <carimirror/image.hpp>
#include <carimirror/mesh.hpp>

#include <functional>
#include <vector>

namespace carimirror {

/// Per-pixel nearest-surface record produced by depth-buffer rasterization.
struct RasterBuffer
{
    int width = 0;
    int height = 0;
    /// Positive distance along the viewing axis; +inf where empty.
    std::vector<double> depth;
    std::vector<int> face;
    /// Perspective-correct barycentrics of the covering face.
    std::vector<Vec3> bary;

    bool covered(int x, int y) const { return face[static_cast<size_t>(y * width + x)] >= 0; }
};

/// Calls `fn(face, x, y, bary)` for every integer pixel centre inside each 2D triangle.
void for_each_covered_pixel(const std::vector<Vec2>& points,
                            const std::vector<Face>& faces,
                            int width,
                            int height,
                            const std::function<void(int face, int x, int y, const Vec3& bary)>& fn);

/// Depth-buffer rasterization of a mesh seen through (K, pose).
RasterBuffer rasterize(const Eigen::MatrixX3d& vertices, const std::vector<Face>& faces,
                       const Intrinsics& K, const Pose& pose, int width, int height);

/// Per-vertex visibility: in front of the camera, inside the image, facing it, and not occluded.
std::vector<char> visible_vertices(const Eigen::MatrixX3d& vertices, const std::vector<Face>& faces,
                                   const Eigen::MatrixX3d& normals, const Intrinsics& K, const Pose& pose,
                                   const RasterBuffer& buffer, double depthTolerance);

/// Renders per-pixel colour from a surface shader `shade(face, bary) -> colour` (channels entries).
Image render(const Eigen::MatrixX3d& vertices, const std::vector<Face>& faces, const Intrinsics& K,
             const Pose& pose, int width, int height, int channels,
             const std::function<Eigen::VectorXd(int face, const Vec3& bary)>& shade, double background = 0.0);

/// Face coverage of a texel grid over the mesh's (u, v) chart.
/// Texel (x, y) sits at chart coordinate (x / (W - 1), 1 - y / (H - 1)).
struct ChartRaster
{
    int width = 0;
    int height = 0;
    std::vector<int> face;
    std::vector<Vec3> bary;
    bool covered(int x, int y) const { return face[static_cast<size_t>(y * width + x)] >= 0; }
    int index(int x, int y) const { return y * width + x; }
};

ChartRaster rasterize_chart(const Eigen::MatrixX2d& uv, const std::vector<Face>& faces, int width, int height);

/// Chart coordinate of a texel centre.
inline Vec2 texel_to_uv(double x, double y, int width, int height)
{
    return {x / (width - 1), 1.0 - y / (height - 1)};
}

} // namespace carimirror
