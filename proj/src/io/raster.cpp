// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#include <carimirror/error.hpp>
#include <carimirror/raster.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace carimirror {

void for_each_covered_pixel(const std::vector<Vec2>& p,
                            const std::vector<Face>& faces,
                            int width,
                            int height,
                            const std::function<void(int, int, int, const Vec3&)>& fn)
{
    for (size_t fi = 0; fi < faces.size(); ++fi) {
        const Face& f = faces[fi];
        const Vec2& a = p[static_cast<size_t>(f[0])];
        const Vec2& b = p[static_cast<size_t>(f[1])];
        const Vec2& c = p[static_cast<size_t>(f[2])];
        const double area = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
        if (std::abs(area) < 1e-14) continue;
        const int x0 = std::max(0, static_cast<int>(std::ceil(std::min({a.x(), b.x(), c.x()}) - 1e-9)));
        const int x1 = std::min(width - 1, static_cast<int>(std::floor(std::max({a.x(), b.x(), c.x()}) + 1e-9)));
        const int y0 = std::max(0, static_cast<int>(std::ceil(std::min({a.y(), b.y(), c.y()}) - 1e-9)));
        const int y1 = std::min(height - 1, static_cast<int>(std::floor(std::max({a.y(), b.y(), c.y()}) + 1e-9)));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const Vec2 q(x, y);
                const double w0 = ((b - q).x() * (c - q).y() - (b - q).y() * (c - q).x()) / area;
                const double w1 = ((c - q).x() * (a - q).y() - (c - q).y() * (a - q).x()) / area;
                const double w2 = 1.0 - w0 - w1;
                constexpr double tol = -1e-9;
                if (w0 < tol || w1 < tol || w2 < tol) continue;
                fn(static_cast<int>(fi), x, y, Vec3(w0, w1, w2));
            }
        }
    }
}

RasterBuffer rasterize(const Eigen::MatrixX3d& vertices, const std::vector<Face>& faces,
                       const Intrinsics& K, const Pose& pose, int width, int height)
{
    RasterBuffer buf;
    buf.width = width;
    buf.height = height;
    const size_t n = static_cast<size_t>(width) * static_cast<size_t>(height);
    buf.depth.assign(n, std::numeric_limits<double>::infinity());
    buf.face.assign(n, -1);
    buf.bary.assign(n, Vec3::Zero());

    const auto nv = static_cast<size_t>(vertices.rows());
    std::vector<Vec2> screen(nv);
    std::vector<double> dist(nv);
    for (size_t i = 0; i < nv; ++i) {
        const Vec3 pc = pose.apply(vertices.row(static_cast<Eigen::Index>(i)).transpose());
        dist[i] = -pc.z();
        screen[i] = dist[i] > 1e-9 ? project(K, pc) : Vec2(-1e9, -1e9);
    }
    std::vector<Face> front;
    front.reserve(faces.size());
    std::vector<int> faceId;
    faceId.reserve(faces.size());
    for (size_t fi = 0; fi < faces.size(); ++fi) {
        const Face& f = faces[fi];
        if (dist[static_cast<size_t>(f[0])] > 1e-9 && dist[static_cast<size_t>(f[1])] > 1e-9 && dist[static_cast<size_t>(f[2])] > 1e-9) {
            front.push_back(f);
            faceId.push_back(static_cast<int>(fi));
        }
    }
    for_each_covered_pixel(screen, front, width, height, [&](int local, int x, int y, const Vec3& b) {
        const Face& f = front[static_cast<size_t>(local)];
        // Perspective-correct interpolation through 1/depth.
        const Vec3 inv(b[0] / dist[static_cast<size_t>(f[0])], b[1] / dist[static_cast<size_t>(f[1])], b[2] / dist[static_cast<size_t>(f[2])]);
        const double s = inv.sum();
        const double z = 1.0 / s;
        const size_t idx = static_cast<size_t>(y) * static_cast<size_t>(width) + static_cast<size_t>(x);
        if (z < buf.depth[idx]) {
            buf.depth[idx] = z;
            buf.face[idx] = faceId[static_cast<size_t>(local)];
            buf.bary[idx] = inv / s;
        }
    });
    return buf;
}

std::vector<char> visible_vertices(const Eigen::MatrixX3d& vertices, const std::vector<Face>& faces,
                                   const Eigen::MatrixX3d& normals, const Intrinsics& K, const Pose& pose,
                                   const RasterBuffer& buffer, double depthTolerance)
{
    (void)faces;
    const auto n = static_cast<size_t>(vertices.rows());
    std::vector<char> vis(n, 0);
    const Vec3 center = pose.center();
    for (size_t i = 0; i < n; ++i) {
        const Vec3 x = vertices.row(static_cast<Eigen::Index>(i)).transpose();
        const Vec3 pc = pose.apply(x);
        if (pc.z() >= -1e-9) continue;
        const Vec2 uv = project(K, pc);
        if (uv.x() < 0.0 || uv.y() < 0.0 || uv.x() > buffer.width - 1 || uv.y() > buffer.height - 1) continue;
        const Vec3 n3 = normals.row(static_cast<Eigen::Index>(i)).transpose();
        if (n3.dot(x - center) >= 0.0) continue;
        // Compare against the nearest depth in the surrounding 2x2 pixel block.
        const int x0 = static_cast<int>(std::floor(uv.x()));
        const int y0 = static_cast<int>(std::floor(uv.y()));
        double best = std::numeric_limits<double>::infinity();
        for (int dy = 0; dy <= 1; ++dy) {
            for (int dx = 0; dx <= 1; ++dx) {
                const int xx = std::min(x0 + dx, buffer.width - 1);
                const int yy = std::min(y0 + dy, buffer.height - 1);
                best = std::min(best, buffer.depth[static_cast<size_t>(yy * buffer.width + xx)]);
            }
        }
        if (-pc.z() <= best + depthTolerance) vis[i] = 1;
    }
    return vis;
}

Image render(const Eigen::MatrixX3d& vertices, const std::vector<Face>& faces, const Intrinsics& K,
             const Pose& pose, int width, int height, int channels,
             const std::function<Eigen::VectorXd(int, const Vec3&)>& shade, double background)
{
    const RasterBuffer buf = rasterize(vertices, faces, K, pose, width, height);
    Image img(width, height, channels, background);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const size_t idx = static_cast<size_t>(y * width + x);
            if (buf.face[idx] < 0) continue;
            const Eigen::VectorXd c = shade(buf.face[idx], buf.bary[idx]);
            for (int k = 0; k < channels; ++k) img.at(x, y, k) = c[k];
        }
    }
    return img;
}

ChartRaster rasterize_chart(const Eigen::MatrixX2d& uv, const std::vector<Face>& faces, int width, int height)
{
    if (width < 2 || height < 2) throw InvalidInput("chart raster needs at least 2x2 texels");
    ChartRaster out;
    out.width = width;
    out.height = height;
    out.face.assign(static_cast<size_t>(width) * static_cast<size_t>(height), -1);
    out.bary.assign(out.face.size(), Vec3::Zero());
    std::vector<Vec2> pts(static_cast<size_t>(uv.rows()));
    for (Eigen::Index i = 0; i < uv.rows(); ++i) {
        pts[static_cast<size_t>(i)] = Vec2(uv(i, 0) * (width - 1), (1.0 - uv(i, 1)) * (height - 1));
    }
    for_each_covered_pixel(pts, faces, width, height, [&](int f, int x, int y, const Vec3& b) {
        const size_t idx = static_cast<size_t>(y * width + x);
        if (out.face[idx] >= 0) return;
        out.face[idx] = f;
        out.bary[idx] = b;
    });
    return out;
}

} // namespace carimirror
