// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#include <carimirror/error.hpp>
#include <carimirror/parallel.hpp>
#include <carimirror/raster.hpp>
#include <carimirror/statics/displacement.hpp>

#include <cmath>

namespace carimirror {

namespace {

struct Sample
{
    Eigen::VectorXd value;
    Eigen::MatrixXd grad; // C x 2
};

Sample sample_color(const Image& img, const Vec2& u)
{
    Sample s{Eigen::VectorXd(img.channels()), Eigen::MatrixXd(img.channels(), 2)};
    for (int c = 0; c < img.channels(); ++c) {
        double dx = 0.0;
        double dy = 0.0;
        s.value[c] = img.sample(u.x(), u.y(), c, dx, dy);
        s.grad(c, 0) = dx;
        s.grad(c, 1) = dy;
    }
    return s;
}

Vec2 clamp_to_image(const Image& img, const Vec2& u, bool& clamped)
{
    const Vec2 c(std::clamp(u.x(), 0.0, static_cast<double>(img.width() - 1)), std::clamp(u.y(), 0.0, static_cast<double>(img.height() - 1)));
    clamped = clamped || c != u;
    return c;
}

} // namespace

DisplacementField optimize_displacement(const MultiViewCapture& capture, const TriMesh& coarse,
                                        const std::vector<CameraModel>& cameras, const DisplacementOptions& options)
{
    const int views = capture.view_count();
    if (views == 0) throw InvalidInput("optimize_displacement: capture has no views");
    if (static_cast<int>(cameras.size()) != views) throw InvalidInput("optimize_displacement: one camera per view required");
    if (!(options.lambdaReg >= 0.0)) throw InvalidInput("optimize_displacement: lambdaReg must be nonnegative");
    for (const auto& cam : cameras) cam.validate();
    const int channels = capture.views.front().image.channels();
    for (const auto& v : capture.views) {
        if (v.image.empty() || v.image.channels() != channels) throw InvalidInput("optimize_displacement: views must share a colour layout");
    }

    const int nv = coarse.vertex_count();
    DisplacementField field;
    field.vertexCount = nv;
    field.viewCount = views;
    const size_t total = static_cast<size_t>(nv) * static_cast<size_t>(views);
    field.base.assign(total, Vec2::Zero());
    field.delta.assign(total, Vec2::Zero());
    field.visible.assign(total, 0);
    field.clamped.assign(total, 0);
    field.bestView.assign(static_cast<size_t>(nv), -1);
    field.refined.assign(static_cast<size_t>(nv), 0);

    const Eigen::MatrixX3d N = vertex_normals_matrix(coarse);
    const double tol = options.depthTolerance > 0.0 ? options.depthTolerance : 5e-3 * coarse.bbox_diagonal();
    for (int j = 0; j < views; ++j) {
        const auto& cam = cameras[static_cast<size_t>(j)];
        const Image& img = capture.views[static_cast<size_t>(j)].image;
        const RasterBuffer buf = rasterize(coarse.vertices(), coarse.faces(), cam.intrinsics, cam.pose, img.width(), img.height());
        const auto vis = visible_vertices(coarse.vertices(), coarse.faces(), N, cam.intrinsics, cam.pose, buf, tol);
        const Vec3 center = cam.pose.center();
        for (int i = 0; i < nv; ++i) {
            const Vec3 x = coarse.vertex(i);
            const Vec3 pc = cam.pose.apply(x);
            if (!(pc.z() < 0.0) || !vis[static_cast<size_t>(i)]) continue;
            const Vec2 u = project(cam.intrinsics, pc);
            field.base[field.at(i, j)] = u;
            if (N.row(i).dot((center - x).normalized()) <= options.minFacingCosine) continue;
            bool footprint = true;
            const int x0 = static_cast<int>(std::floor(u.x()));
            const int y0 = static_cast<int>(std::floor(u.y()));
            for (int dy = 0; dy <= 1 && footprint; ++dy) {
                for (int dx = 0; dx <= 1 && footprint; ++dx) {
                    const int xx = std::min(x0 + dx, buf.width - 1);
                    const int yy = std::min(y0 + dy, buf.height - 1);
                    footprint = buf.covered(xx, yy) && buf.depth[static_cast<size_t>(yy * buf.width + xx)] > -pc.z() - tol;
                }
            }
            field.visible[field.at(i, j)] = footprint ? 1 : 0;
        }
    }

    parallel_for(nv, [&](int i) {
        const Vec3 x = coarse.vertex(i);
        const Vec3 n = N.row(i).transpose();
        double bestCos = -2.0;
        int count = 0;
        for (int j = 0; j < views; ++j) {
            if (!field.visible[field.at(i, j)]) continue;
            ++count;
            const double cosine = n.dot((cameras[static_cast<size_t>(j)].pose.center() - x).normalized());
            // Strict comparison keeps the lowest index on ties.
            if (cosine > bestCos) {
                bestCos = cosine;
                field.bestView[static_cast<size_t>(i)] = j;
            }
        }
        if (count < 2) return;
        field.refined[static_cast<size_t>(i)] = 1;
        const int best = field.bestView[static_cast<size_t>(i)];
        const Vec2 ub = field.base[field.at(i, best)];
        const Image& bestImg = capture.views[static_cast<size_t>(best)].image;
        Eigen::VectorXd anchor(channels);
        for (int c = 0; c < channels; ++c) anchor[c] = bestImg.sample(ub.x(), ub.y(), c);

        {
            for (int j = 0; j < views; ++j) {
                const size_t idx = field.at(i, j);
                if (!field.visible[idx]) continue;
                const Image& img = capture.views[static_cast<size_t>(j)].image;
                const Vec2 u0 = field.base[idx];
                bool clamped = false;
                Vec2 d = Vec2::Zero();
                auto energy = [&](const Vec2& dd, bool& clampFlag) {
                    const Vec2 u = clamp_to_image(img, u0 + dd, clampFlag);
                    double e = options.lambdaReg * dd.squaredNorm();
                    for (int c = 0; c < channels; ++c) {
                        const double r = img.sample(u.x(), u.y(), c) - anchor[c];
                        e += r * r;
                    }
                    return e;
                };
                bool scratch = false;
                double e = energy(d, scratch);
                for (int sy = -options.searchRadius; sy <= options.searchRadius; ++sy) {
                    for (int sx = -options.searchRadius; sx <= options.searchRadius; ++sx) {
                        bool off = false;
                        const Vec2 cand(sx, sy);
                        const double ec = energy(cand, off);
                        if (!off && ec < e) {
                            e = ec;
                            d = cand;
                        }
                    }
                }
                for (int it = 0; it < options.iterations; ++it) {
                    bool dummy = false;
                    const Sample s = sample_color(img, clamp_to_image(img, u0 + d, dummy));
                    const Eigen::VectorXd r = s.value - anchor;
                    Eigen::Matrix2d H = s.grad.transpose() * s.grad + options.lambdaReg * Eigen::Matrix2d::Identity();
                    const Vec2 g = s.grad.transpose() * r + options.lambdaReg * d;
                    if (g.norm() < 1e-14) break;
                    H.diagonal().array() += 1e-12;
                    const Vec2 step = -H.ldlt().solve(g);
                    if (!step.allFinite()) break;
                    double scale = 1.0;
                    bool accepted = false;
                    for (int h = 0; h < 8; ++h, scale *= 0.5) {
                        bool candClamp = false;
                        const Vec2 cand = d + scale * step;
                        const double ec = energy(cand, candClamp);
                        if (ec < e) {
                            d = clamp_to_image(img, u0 + cand, candClamp) - u0;
                            // Clamping only shrinks |d| per axis, so this does not exceed ec.
                            e = energy(d, scratch);
                            clamped = candClamp;
                            accepted = true;
                            break;
                        }
                    }
                    if (!accepted) break;
                }
                field.delta[idx] = d;
                field.clamped[idx] = clamped ? 1 : 0;
            }
        }
    });
    return field;
}

} // namespace carimirror
