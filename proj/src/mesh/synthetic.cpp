// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#include <carimirror/error.hpp>
#include <carimirror/synthetic.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

namespace carimirror {

namespace {

constexpr double W = SyntheticFaceModel::kFaceWidth;
constexpr double H = SyntheticFaceModel::kFaceHeight;

double gauss(double x, double y, double cx, double cy, double sx, double sy)
{
    const double dx = (x - cx) / sx;
    const double dy = (y - cy) / sy;
    return std::exp(-0.5 * (dx * dx + dy * dy));
}

double mirrored(double x, double y, double cx, double cy, double sx, double sy)
{
    return gauss(x, y, cx, cy, sx, sy) + gauss(x, y, -cx, cy, sx, sy);
}

/// Feature relief of the template; `gain` scales the facial features, not the base dome.
double template_depth(double x, double y, double gain)
{
    const double nx = 2.0 * x / W;
    const double ny = 2.0 * y / H;
    const double base = 55.0 * (1.0 - 0.75 * nx * nx - 0.35 * ny * ny);
    double features = 0.0;
    features += 22.0 * gauss(x, y, 0.0, 0.0, 9.0, 28.0);     // nose ridge
    features += 8.0 * gauss(x, y, 0.0, -18.0, 7.0, 7.0);     // nose tip
    features += -9.0 * mirrored(x, y, 30.0, 27.0, 12.0, 8.0); // eye sockets
    features += 5.0 * mirrored(x, y, 30.0, 42.0, 16.0, 5.0);  // brow ridge
    features += 4.0 * gauss(x, y, 0.0, -40.0, 18.0, 5.0);    // upper lip
    features += 3.0 * gauss(x, y, 0.0, -50.0, 16.0, 4.0);    // lower lip
    features += 7.0 * gauss(x, y, 0.0, -75.0, 18.0, 10.0);   // chin
    features += 5.0 * mirrored(x, y, 42.0, 5.0, 14.0, 12.0);  // cheekbones
    return base + gain * features;
}

/// Vanishes on the chart border so expression shapes leave the border fixed.
double border_window(double u, double v)
{
    const double a = 4.0 * u * (1.0 - u);
    const double b = 4.0 * v * (1.0 - v);
    return std::clamp(a, 0.0, 1.0) * std::clamp(b, 0.0, 1.0);
}

using Field = std::function<Vec3(double x, double y, double z)>;

std::vector<Field> identity_fields()
{
    return {
        [](double x, double, double) { return Vec3(0.06 * x, 0, 0); },                              // width
        [](double, double y, double) { return Vec3(0, 0.05 * y, 0); },                              // length
        [](double, double, double z) { return Vec3(0, 0, 0.08 * z); },                              // depth
        [](double x, double y, double) { return Vec3(0, 0, 6.0 * gauss(x, y, 0, -5, 8, 24)); },     // nose height
        [](double x, double y, double) { return Vec3(0.25 * x * gauss(x, y, 0, -15, 10, 14), 0, 0); }, // nose width
        [](double x, double y, double) { return Vec3(0, -6.0 * gauss(x, y, 0, -80, 30, 18), 0); },  // chin length
        [](double x, double y, double) { return Vec3(0, 0, 5.0 * mirrored(x, y, 40, -10, 18, 18)); }, // cheeks
        [](double x, double y, double) {
            return Vec3(4.0 * (gauss(x, y, 30, 27, 14, 12) - gauss(x, y, -30, 27, 14, 12)), 0, 0);
        }, // eye spacing
        [](double x, double y, double) { return Vec3(0, 0, -6.0 * gauss(x, y, 0, 85, 50, 25)); },   // forehead slope
        [](double x, double y, double) { return Vec3(0.12 * x * gauss(x, y, 0, -60, 60, 25), 0, 0); }, // jaw width
    };
}

double jaw_mask(double y) { return 1.0 / (1.0 + std::exp((y + 46.0) / 5.0)); }

std::vector<Field> expression_fields()
{
    return {
        [](double x, double y, double) {
            const double m = jaw_mask(y) * gauss(x, 0, 0, 0, 45, 1);
            return Vec3(0, -10.0 * m, -3.0 * m);
        }, // jaw open
        [](double x, double y, double) {
            const double l = gauss(x, y, -24, -44, 9, 8);
            const double r = gauss(x, y, 24, -44, 9, 8);
            return Vec3(4.0 * (r - l), 5.0 * (l + r), -1.0 * (l + r));
        }, // smile
        [](double x, double y, double) {
            const double g = gauss(x, y, 0, -45, 14, 10);
            return Vec3(-0.25 * x * g, 0, 6.0 * g);
        }, // pucker
        [](double x, double y, double) { return Vec3(0, 6.0 * mirrored(x, y, 30, 44, 15, 9), 0); }, // brow raise
        [](double x, double y, double) {
            const double l = gauss(x, y, -20, 40, 10, 8);
            const double r = gauss(x, y, 20, 40, 10, 8);
            return Vec3(3.0 * (l - r), -3.0 * (l + r), 1.0 * (l + r));
        }, // frown
        [](double x, double y, double) { return Vec3(0, -4.0 * gauss(x, y, -30, 31, 10, 5), 0); }, // left lid
        [](double x, double y, double) { return Vec3(0, -4.0 * gauss(x, y, 30, 31, 10, 5), 0); },  // right lid
        [](double x, double y, double) { return Vec3(0, 0, 7.0 * mirrored(x, y, 38, -35, 13, 13)); }, // cheek puff
    };
}

Eigen::MatrixXd build_basis(const std::vector<Field>& fields, const Eigen::MatrixX3d& tmpl, const Eigen::MatrixX2d& uv, bool windowed)
{
    const auto n = tmpl.rows();
    Eigen::MatrixXd basis(3 * n, static_cast<Eigen::Index>(fields.size()));
    for (size_t k = 0; k < fields.size(); ++k) {
        for (Eigen::Index i = 0; i < n; ++i) {
            Vec3 d = fields[k](tmpl(i, 0), tmpl(i, 1), tmpl(i, 2));
            if (windowed) d *= border_window(uv(i, 0), uv(i, 1));
            basis.block<3, 1>(3 * i, static_cast<Eigen::Index>(k)) = d;
        }
    }
    return basis;
}

std::vector<Vec2> landmark_layout()
{
    std::vector<Vec2> pts;
    const double pi = std::numbers::pi;
    for (int k = 0; k <= 16; ++k) { // jaw
        const double phi = pi + pi * k / 16.0;
        pts.emplace_back(0.40 * W * std::cos(phi), 0.06 * H + 0.42 * H * std::sin(phi));
    }
    for (int k = 0; k < 5; ++k) pts.emplace_back(-48.0 + 9.0 * k, 42.0 + 4.0 * std::sin(pi * k / 4.0)); // left brow
    for (int k = 0; k < 5; ++k) pts.emplace_back(12.0 + 9.0 * k, 42.0 + 4.0 * std::sin(pi * k / 4.0));  // right brow
    for (int k = 0; k < 4; ++k) pts.emplace_back(0.0, 28.0 - 10.0 * k);                                // bridge
    for (int k = 0; k < 5; ++k) {
        const double x = -12.0 + 6.0 * k;
        pts.emplace_back(x, -22.0 + 0.1 * std::abs(x));
    }
    auto loop = [&](double cx, double cy, double rx, double ry, int count) {
        for (int k = 0; k < count; ++k) {
            const double t = pi - 2.0 * pi * k / count;
            pts.emplace_back(cx + rx * std::cos(t), cy + ry * std::sin(t));
        }
    };
    loop(-30.0, 27.0, 13.0, 5.0, 6);  // left eye 36-41
    loop(30.0, 27.0, 13.0, 5.0, 6);   // right eye 42-47
    loop(0.0, -44.0, 24.0, 9.0, 12);  // outer mouth 48-59
    loop(0.0, -44.0, 14.0, 4.0, 8);   // inner mouth 60-67
    return pts;
}

struct Bump
{
    double cx, cy, sigma;
    Vec3 dir;
};

std::vector<Bump> localized_bumps()
{
    const std::vector<Vec2> centers = {
        {-40, -10}, {40, -10}, {-20, 60}, {20, 60}, {0, 70}, {-15, -5}, {15, -5}, {-35, -55}, {35, -55}, {0, -65},
        {-12, 12}, {12, 12}, {-48, 20}, {48, 20}, {-28, -25}, {28, -25}, {0, -30}, {-45, -35}, {45, -35},
    };
    std::vector<Bump> bumps;
    for (const auto& c : centers) bumps.push_back({c.x(), c.y(), 11.0, Vec3(0, 0, 5.0)});
    for (const auto& c : centers) bumps.push_back({c.x(), c.y(), 11.0, Vec3(0, 4.0, 0)});
    return bumps;
}

} // namespace

SyntheticFaceModel::SyntheticFaceModel(FaceGrid grid)
    : m_grid(grid)
{
    if (grid.cols < 8 || grid.rows < 8) throw InvalidInput("synthetic face grid must be at least 8 x 8");
    const int n = grid.cols * grid.rows;
    Eigen::MatrixX3d v(n, 3);
    Eigen::MatrixX3d ve(n, 3);
    m_uv.resize(n, 2);
    for (int r = 0; r < grid.rows; ++r) {
        for (int c = 0; c < grid.cols; ++c) {
            const int i = vertex_index(c, r);
            const double u = static_cast<double>(c) / (grid.cols - 1);
            const double t = static_cast<double>(r) / (grid.rows - 1);
            const double x = W * (u - 0.5);
            const double y = H * (t - 0.5);
            m_uv(i, 0) = u;
            m_uv(i, 1) = t;
            v.row(i) << x, y, template_depth(x, y, 1.0);
            ve.row(i) << x, y, template_depth(x, y, 1.8);
        }
    }
    std::vector<Face> faces;
    faces.reserve(static_cast<size_t>(2 * (grid.cols - 1) * (grid.rows - 1)));
    for (int r = 0; r + 1 < grid.rows; ++r) {
        for (int c = 0; c + 1 < grid.cols; ++c) {
            const int i = vertex_index(c, r);
            faces.push_back({i, i + 1, i + grid.cols + 1});
            faces.push_back({i, i + grid.cols + 1, i + grid.cols});
        }
    }
    m_template = TriMesh(v, faces);
    m_exaggeratedTemplate = TriMesh(ve, faces);
    m_identityBasis = build_basis(identity_fields(), v, m_uv, false);
    m_expressionBasis = build_basis(expression_fields(), v, m_uv, true);

    // Landmarks: nearest unused chart vertex to each layout point.
    std::vector<char> used(static_cast<size_t>(n), 0);
    for (const Vec2& p : landmark_layout()) {
        int best = -1;
        double bestD = std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i) {
            if (used[static_cast<size_t>(i)]) continue;
            const double d = (Vec2(v(i, 0), v(i, 1)) - p).squaredNorm();
            if (d < bestD) {
                bestD = d;
                best = i;
            }
        }
        used[static_cast<size_t>(best)] = 1;
        m_landmarks.indices.push_back(best);
    }
    auto range = [](int first, int count) {
        std::vector<int> out(static_cast<size_t>(count));
        for (int k = 0; k < count; ++k) out[static_cast<size_t>(k)] = first + k;
        return out;
    };
    m_landmarks.polygons = {range(36, 6), range(42, 6), range(48, 12)};
}

TriMesh SyntheticFaceModel::synthesize(const Eigen::VectorXd& identity,
                                       const Eigen::VectorXd& expression,
                                       FaceStyle style,
                                       std::uint64_t seed) const
{
    if (identity.size() != kIdentityDims) throw InvalidInput("identity parameter vector must have 10 entries");
    if (expression.size() != kExpressionDims) throw InvalidInput("expression parameter vector must have 8 entries");
    const Eigen::VectorXd offset = m_identityBasis * identity + m_expressionBasis * expression;
    Eigen::MatrixX3d verts = m_template.vertices();
    for (Eigen::Index i = 0; i < verts.rows(); ++i) verts.row(i) += offset.segment<3>(3 * i).transpose();
    if (style == FaceStyle::Exaggerated) verts = exaggerate(verts, seed);
    return m_template.with_vertices(std::move(verts));
}

Eigen::MatrixX3d SyntheticFaceModel::exaggerate(const Eigen::MatrixX3d& regular, std::uint64_t seed) const
{
    double gain = 1.0;
    if (seed != 0) {
        std::mt19937_64 rng(seed);
        gain = 1.0 + 0.1 * (std::uniform_real_distribution<double>(0.0, 1.0)(rng) - 0.5);
    }
    const Eigen::MatrixX3d d = regular - m_template.vertices();
    Eigen::MatrixX3d out = m_exaggeratedTemplate.vertices();
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
        const double len = d.row(i).norm();
        out.row(i) += gain * (1.5 + 0.02 * len) * d.row(i);
    }
    return out;
}

BlendshapeRig SyntheticFaceModel::template_rig() const
{
    const auto& v = m_template.vertices();
    const int n = m_template.vertex_count();
    std::vector<TriMesh> shapes;
    shapes.reserve(BlendshapeRig::kDefaultShapeCount);
    shapes.push_back(m_template);
    for (int k = 0; k < kExpressionDims; ++k) {
        Eigen::MatrixX3d s = v;
        for (int i = 0; i < n; ++i) s.row(i) += m_expressionBasis.block<3, 1>(3 * i, k).transpose();
        shapes.push_back(m_template.with_vertices(std::move(s)));
    }
    for (const Bump& b : localized_bumps()) {
        Eigen::MatrixX3d s = v;
        for (int i = 0; i < n; ++i) {
            const double g = gauss(v(i, 0), v(i, 1), b.cx, b.cy, b.sigma, b.sigma) * border_window(m_uv(i, 0), m_uv(i, 1));
            s.row(i) += g * b.dir.transpose();
        }
        shapes.push_back(m_template.with_vertices(std::move(s)));
    }
    return BlendshapeRig(std::move(shapes));
}

Eigen::VectorXd SyntheticFaceModel::sample_identity(std::mt19937_64& rng, double scale) const
{
    std::normal_distribution<double> nd(0.0, scale);
    Eigen::VectorXd p(kIdentityDims);
    for (int k = 0; k < kIdentityDims; ++k) p[k] = nd(rng);
    return p;
}

Eigen::VectorXd SyntheticFaceModel::sample_expression(std::mt19937_64& rng, double scale) const
{
    // Expression activations are mostly positive and bounded like blendshape weights.
    std::uniform_real_distribution<double> ud(0.0, scale);
    Eigen::VectorXd p(kExpressionDims);
    for (int k = 0; k < kExpressionDims; ++k) p[k] = ud(rng);
    return p;
}

const SyntheticFaceModel& default_face_model()
{
    static const SyntheticFaceModel model{};
    return model;
}

TriMesh synthesize_face(const Eigen::VectorXd& identityParams,
                        const Eigen::VectorXd& expressionParams,
                        FaceStyle style,
                        std::uint64_t seed)
{
    return default_face_model().synthesize(identityParams, expressionParams, style, seed);
}

Vec3 synthetic_albedo(double u, double v)
{
    const double x = W * (u - 0.5);
    const double y = H * (v - 0.5);
    const double pi2 = 2.0 * std::numbers::pi;
    const double pattern = 0.07 * std::sin(pi2 * 3.0 * u) * std::sin(pi2 * 2.0 * v) + 0.05 * std::cos(pi2 * 5.0 * u + 1.0) * std::cos(pi2 * 4.0 * v);
    Vec3 c(0.78 + pattern, 0.58 + pattern + 0.04 * std::sin(pi2 * 4.0 * v), 0.48 + pattern + 0.04 * std::cos(pi2 * 3.0 * u));
    const double brows = mirrored(x, y, 30.0, 42.0, 14.0, 3.5);
    c -= 0.35 * brows * Vec3(1.0, 1.0, 1.0);
    const double lips = gauss(x, y, 0.0, -44.0, 20.0, 6.0);
    c += lips * Vec3(0.05, -0.2, -0.15);
    const double eyes = mirrored(x, y, 30.0, 27.0, 9.0, 3.5);
    c -= 0.3 * eyes * Vec3(1.0, 1.0, 1.0);
    for (int k = 0; k < 3; ++k) c[k] = std::clamp(c[k], 0.0, 1.0);
    return c;
}

} // namespace carimirror
