// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#include <carimirror/error.hpp>
#include <carimirror/parallel.hpp>
#include <carimirror/raster.hpp>
#include <carimirror/texture/fusion.hpp>
#include <carimirror/texture/maxflow.hpp>

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <unordered_map>

namespace carimirror {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kUnitTolerance = 1e-6;
constexpr int kNeighbourDx[4] = {1, -1, 0, 0};
constexpr int kNeighbourDy[4] = {0, 0, 1, -1};

void check_views(const std::vector<ViewSample>& views)
{
    if (views.empty()) throw InvalidInput("texture fusion: no views");
    for (const auto& v : views) {
        v.validate();
        if (v.width != views.front().width || v.height != views.front().height) {
            throw InvalidInput("texture fusion: views differ in atlas size");
        }
    }
}

/// Pairwise term for labels a != b on the pair (p, q); capped where a colour is missing.
double pair_cost(const std::vector<ViewSample>& views, int a, int b, Texel p, Texel q, double cap)
{
    if (a == b) return 0.0;
    const double c = matching_cost(p, q, views[static_cast<size_t>(a)], views[static_cast<size_t>(b)]);
    return std::isfinite(c) ? c : cap;
}

double data_cost(const std::vector<ViewSample>& views, int label, Texel t, double weight)
{
    const double c = view_cost(t, views[static_cast<size_t>(label)]);
    return std::isfinite(c) ? weight * c : kInf;
}

/// Sum of the energy over right/down neighbour pairs so each pair counts once.
double energy_of(const std::vector<int>& label, int width, int height, const std::vector<ViewSample>& views,
                 const LabelingOptions& options)
{
    double e = 0.0;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const int lp = label[static_cast<size_t>(y * width + x)];
            if (lp == kUnassigned) continue;
            e += data_cost(views, lp, {x, y}, options.dataWeight);
            if (x + 1 < width) {
                const int lq = label[static_cast<size_t>(y * width + x + 1)];
                if (lq != kUnassigned) e += pair_cost(views, lp, lq, {x, y}, {x + 1, y}, options.pairwiseCap);
            }
            if (y + 1 < height) {
                const int lq = label[static_cast<size_t>((y + 1) * width + x)];
                if (lq != kUnassigned) e += pair_cost(views, lp, lq, {x, y}, {x, y + 1}, options.pairwiseCap);
            }
        }
    }
    return e;
}

struct MoveGraph
{
    std::vector<int> node;
    std::vector<double> cost0;
    std::vector<double> cost1;

    explicit MoveGraph(size_t texels) : node(texels, -1) {}

    int add(size_t texel)
    {
        node[texel] = static_cast<int>(cost0.size());
        cost0.push_back(0.0);
        cost1.push_back(0.0);
        return node[texel];
    }
    /// Adds c * x for a binary variable x.
    void linear(int n, double c)
    {
        if (c >= 0.0) cost1[static_cast<size_t>(n)] += c;
        else cost0[static_cast<size_t>(n)] -= c;
    }
};

/// Binary cut where x_p = 1 means "take label alpha"; returns the new labeling.
std::vector<int> expansion_move(const std::vector<int>& label, int width, int height, int alpha,
                                const std::vector<ViewSample>& views, const LabelingOptions& options)
{
    const size_t n = label.size();
    MoveGraph g(n);
    for (size_t i = 0; i < n; ++i) {
        if (label[i] != kUnassigned && label[i] != alpha) g.add(i);
    }
    if (g.cost0.empty()) return label;

    struct PairEdge
    {
        int p;
        int q;
        double lambda;
    };
    std::vector<PairEdge> pairs;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const size_t ip = static_cast<size_t>(y * width + x);
            const int lp = label[ip];
            if (lp == kUnassigned) continue;
            const int np = g.node[ip];
            if (np >= 0) {
                const Texel t{x, y};
                const double d0 = data_cost(views, lp, t, options.dataWeight);
                const double d1 = data_cost(views, alpha, t, options.dataWeight);
                g.cost0[static_cast<size_t>(np)] += d0;
                g.cost1[static_cast<size_t>(np)] += d1;
            }
            for (int k = 0; k < 4; k += 2) {
                // Right (k = 0) and down (k = 2) neighbours only.
                const int qx = x + kNeighbourDx[k];
                const int qy = y + kNeighbourDy[k];
                if (qx >= width || qy >= height) continue;
                const size_t iq = static_cast<size_t>(qy * width + qx);
                const int lq = label[iq];
                if (lq == kUnassigned) continue;
                const int nq = g.node[iq];
                const Texel p{x, y};
                const Texel q{qx, qy};
                if (np < 0 && nq < 0) continue;
                if (np < 0) {
                    // p already alpha: q pays V(alpha, lq) if it keeps its label.
                    g.linear(nq, -pair_cost(views, alpha, lq, p, q, options.pairwiseCap));
                    continue;
                }
                if (nq < 0) {
                    g.linear(np, -pair_cost(views, lp, alpha, p, q, options.pairwiseCap));
                    continue;
                }
                const double A = pair_cost(views, lp, lq, p, q, options.pairwiseCap);
                const double B = pair_cost(views, lp, alpha, p, q, options.pairwiseCap);
                const double C = pair_cost(views, alpha, lq, p, q, options.pairwiseCap);
                // E = A + (C - A) x_p + (0 - C) x_q + (B + C - A)(1 - x_p) x_q
                g.linear(np, C - A);
                g.linear(nq, -C);
                pairs.push_back({np, nq, std::max(0.0, B + C - A)});
            }
        }
    }

    MaxFlow flow(static_cast<int>(g.cost0.size()));
    for (size_t i = 0; i < g.cost0.size(); ++i) {
        // x = 1 is the sink side: cutting source -> node costs cost1.
        const double c0 = g.cost0[i];
        const double c1 = g.cost1[i];
        const double m = std::isfinite(c0) && std::isfinite(c1) ? std::min(c0, c1) : 0.0;
        flow.add_terminal(static_cast<int>(i), std::isfinite(c1) ? c1 - m : kInf, std::isfinite(c0) ? c0 - m : kInf);
    }
    for (const auto& e : pairs) {
        if (e.lambda > 0.0) flow.add_edge(e.p, e.q, e.lambda);
    }
    flow.solve();
    std::vector<int> out = label;
    for (size_t i = 0; i < n; ++i) {
        const int node = g.node[i];
        if (node >= 0 && !flow.source_side(node)) out[i] = alpha;
    }
    return out;
}

/// Exact two-label minimum: x_p = 1 means label 1.
std::vector<int> binary_cut(const std::vector<int>& label, int width, int height, const std::vector<ViewSample>& views,
                            const LabelingOptions& options)
{
    const size_t n = label.size();
    MoveGraph g(n);
    for (size_t i = 0; i < n; ++i) {
        if (label[i] != kUnassigned) g.add(i);
    }
    MaxFlow flow(static_cast<int>(g.cost0.size()));
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const size_t ip = static_cast<size_t>(y * width + x);
            const int np = g.node[ip];
            if (np < 0) continue;
            const Texel p{x, y};
            const double c0 = data_cost(views, 0, p, options.dataWeight);
            const double c1 = data_cost(views, 1, p, options.dataWeight);
            const double m = std::isfinite(c0) && std::isfinite(c1) ? std::min(c0, c1) : 0.0;
            flow.add_terminal(np, std::isfinite(c1) ? c1 - m : kInf, std::isfinite(c0) ? c0 - m : kInf);
            for (int k = 0; k < 4; k += 2) {
                const int qx = x + kNeighbourDx[k];
                const int qy = y + kNeighbourDy[k];
                if (qx >= width || qy >= height) continue;
                const int nq = g.node[static_cast<size_t>(qy * width + qx)];
                if (nq < 0) continue;
                const double v = pair_cost(views, 0, 1, p, {qx, qy}, options.pairwiseCap);
                if (v > 0.0) flow.add_edge(np, nq, v, v);
            }
        }
    }
    flow.solve();
    std::vector<int> out = label;
    for (size_t i = 0; i < n; ++i) {
        const int node = g.node[i];
        if (node >= 0) out[i] = flow.source_side(node) ? 0 : 1;
    }
    return out;
}

} // namespace

ViewSample::ViewSample(int w, int h)
    : width(w),
      height(h),
      color(static_cast<size_t>(w) * static_cast<size_t>(h), Vec3::Zero()),
      normal(static_cast<size_t>(w) * static_cast<size_t>(h), Vec3(0, 0, 1)),
      valid(static_cast<size_t>(w) * static_cast<size_t>(h), 0)
{
    if (w <= 0 || h <= 0) throw InvalidInput("ViewSample: empty atlas");
}

void ViewSample::validate() const
{
    const size_t n = static_cast<size_t>(width) * static_cast<size_t>(height);
    if (width <= 0 || height <= 0 || color.size() != n || normal.size() != n || valid.size() != n) {
        throw InvalidInput("ViewSample: buffer sizes do not match the atlas");
    }
    if (std::abs(direction.norm() - 1.0) > kUnitTolerance) throw InvalidInput("ViewSample: view direction is not unit");
    for (size_t i = 0; i < n; ++i) {
        if (!valid[i]) continue;
        if (std::abs(normal[i].norm() - 1.0) > kUnitTolerance) throw InvalidInput("ViewSample: normal is not unit");
        if (!(color[i].minCoeff() >= 0.0 && color[i].maxCoeff() <= 1.0)) throw InvalidInput("ViewSample: colour outside [0,1]");
    }
}

double matching_cost(Texel u1, Texel u2, const ViewSample& viewI, const ViewSample& viewJ)
{
    if (!viewI.is_valid(u1) || !viewI.is_valid(u2) || !viewJ.is_valid(u1) || !viewJ.is_valid(u2)) return kInf;
    const auto at = [](const ViewSample& v, Texel t) { return v.color[static_cast<size_t>(v.index(t))]; };
    return (at(viewI, u1) - at(viewJ, u1)).norm() + (at(viewI, u2) - at(viewJ, u2)).norm();
}

double view_cost(Texel u, const ViewSample& view)
{
    if (!view.is_valid(u)) return kInf;
    return 2.0 - (view.normal[static_cast<size_t>(view.index(u))] - view.direction).norm();
}

std::vector<char> coverage_mask(const std::vector<ViewSample>& views)
{
    check_views(views);
    std::vector<char> mask(views.front().valid.size(), 0);
    for (const auto& v : views) {
        for (size_t i = 0; i < mask.size(); ++i) mask[i] = static_cast<char>(mask[i] || v.valid[i]);
    }
    return mask;
}

double labeling_energy(const LabelMap& labels, const std::vector<ViewSample>& views, const LabelingOptions& options)
{
    check_views(views);
    if (labels.width != views.front().width || labels.height != views.front().height) {
        throw InvalidInput("labeling_energy: label map size differs from views");
    }
    return energy_of(labels.label, labels.width, labels.height, views, options);
}

LabelingResult solve_labeling(const std::vector<ViewSample>& views, const std::vector<char>& maskIn,
                              const LabelingOptions& options)
{
    check_views(views);
    const int width = views.front().width;
    const int height = views.front().height;
    const std::vector<char> mask = maskIn.empty() ? coverage_mask(views) : maskIn;
    if (mask.size() != views.front().valid.size()) throw InvalidInput("solve_labeling: mask size differs from views");
    if (!(options.dataWeight >= 0.0) || options.maxSweeps < 1 || !(options.pairwiseCap > 0.0)) {
        throw InvalidInput("solve_labeling: invalid options");
    }

    LabelingResult result;
    result.labels.width = width;
    result.labels.height = height;
    result.labels.label.assign(mask.size(), kUnassigned);
    std::vector<int>& label = result.labels.label;

    std::vector<Texel> uncovered;
    size_t uncoveredCount = 0;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const size_t i = static_cast<size_t>(y * width + x);
            if (!mask[i]) continue;
            double best = kInf;
            for (size_t j = 0; j < views.size(); ++j) {
                const double c = view_cost({x, y}, views[j]);
                if (c < best) {
                    best = c;
                    label[i] = static_cast<int>(j);
                }
            }
            if (label[i] == kUnassigned) {
                ++uncoveredCount;
                if (uncovered.size() < 8) uncovered.push_back({x, y});
            }
        }
    }
    if (uncoveredCount > 0) {
        std::ostringstream msg;
        msg << "solve_labeling: " << uncoveredCount << " mask texels have no valid view:";
        for (const Texel& t : uncovered) msg << " (" << t.x << "," << t.y << ")";
        if (uncoveredCount > uncovered.size()) msg << " ...";
        throw InvalidInput(msg.str());
    }

    double energy = energy_of(label, width, height, views, options);
    result.energyHistory.push_back(energy);
    const int labelCount = static_cast<int>(views.size());
    if (labelCount == 1) return result;

    if (labelCount == 2) {
        std::vector<int> cut = binary_cut(label, width, height, views, options);
        const double e = energy_of(cut, width, height, views, options);
        if (e <= energy) {
            label = std::move(cut);
            energy = e;
        }
        result.energyHistory.push_back(energy);
        result.sweeps = 1;
        return result;
    }

    for (int sweep = 0; sweep < options.maxSweeps; ++sweep) {
        bool improved = false;
        for (int alpha = 0; alpha < labelCount; ++alpha) {
            std::vector<int> moved = expansion_move(label, width, height, alpha, views, options);
            const double e = energy_of(moved, width, height, views, options);
            if (e < energy - 1e-12 * std::max(1.0, std::abs(energy))) {
                label = std::move(moved);
                energy = e;
                improved = true;
            }
        }
        result.energyHistory.push_back(energy);
        result.sweeps = sweep + 1;
        if (!improved) break;
    }
    return result;
}

Vec3 guidance_difference(const LabelMap& labels, const std::vector<ViewSample>& views, Texel p, Texel q)
{
    const int lp = labels.at(p.x, p.y);
    const bool qInside = q.x >= 0 && q.y >= 0 && q.x < labels.width && q.y < labels.height;
    const int lq = qInside ? labels.at(q.x, q.y) : kUnassigned;
    const auto diff = [&](int l, Vec3& out) {
        const ViewSample& v = views[static_cast<size_t>(l)];
        if (!v.is_valid(p) || !v.is_valid(q)) return false;
        out = v.color[static_cast<size_t>(v.index(p))] - v.color[static_cast<size_t>(v.index(q))];
        return true;
    };
    Vec3 a = Vec3::Zero();
    Vec3 b = Vec3::Zero();
    const bool hasA = lp != kUnassigned && diff(lp, a);
    if (lq == kUnassigned || lq == lp) return hasA ? a : Vec3::Zero();
    const bool hasB = diff(lq, b);
    if (hasA && hasB) return 0.5 * (a + b);
    if (hasA) return a;
    if (hasB) return b;
    return Vec3::Zero();
}

TextureAtlas poisson_blend(const LabelMap& labels, const std::vector<ViewSample>& views, const TextureAtlas& templ,
                           const PoissonOptions& options)
{
    check_views(views);
    const int width = labels.width;
    const int height = labels.height;
    if (width != views.front().width || height != views.front().height) throw InvalidInput("poisson_blend: label map size differs from views");
    if (templ.color.width() != width || templ.color.height() != height || templ.color.channels() != 3) {
        throw InvalidInput("poisson_blend: template must be a 3-channel atlas of the label map size");
    }
    const size_t n = static_cast<size_t>(width) * static_cast<size_t>(height);
    if (labels.label.size() != n) throw InvalidInput("poisson_blend: label buffer size mismatch");

    // 4-connected components of labeled texels.
    std::vector<int> component(n, -1);
    std::vector<std::vector<int>> components;
    for (size_t seed = 0; seed < n; ++seed) {
        if (labels.label[seed] == kUnassigned || component[seed] >= 0) continue;
        const int id = static_cast<int>(components.size());
        components.emplace_back();
        std::vector<int> stack{static_cast<int>(seed)};
        component[seed] = id;
        while (!stack.empty()) {
            const int i = stack.back();
            stack.pop_back();
            components.back().push_back(i);
            for (int k = 0; k < 4; ++k) {
                const int qx = i % width + kNeighbourDx[k];
                const int qy = i / width + kNeighbourDy[k];
                if (qx < 0 || qy < 0 || qx >= width || qy >= height) continue;
                const size_t j = static_cast<size_t>(qy * width + qx);
                if (labels.label[j] == kUnassigned || component[j] >= 0) continue;
                component[j] = id;
                stack.push_back(static_cast<int>(j));
            }
        }
    }
    if (components.empty()) throw InvalidInput("poisson_blend: no labeled texels");

    TextureAtlas out;
    out.color = templ.color;
    out.mask = templ.mask;
    std::vector<std::string> failures(components.size());

    parallel_for(components.size(), [&](size_t c) {
        const std::vector<int>& texels = components[c];
        const int m = static_cast<int>(texels.size());
        std::unordered_map<int, int> position;
        position.reserve(texels.size());
        for (int k = 0; k < m; ++k) position[texels[static_cast<size_t>(k)]] = k;

        std::vector<Eigen::Triplet<double>> triplets;
        Eigen::MatrixX3d rhs = Eigen::MatrixX3d::Zero(m, 3);
        bool hasBoundary = false;
        for (int k = 0; k < m; ++k) {
            const int i = texels[static_cast<size_t>(k)];
            const Texel p{i % width, i / width};
            double diag = 0.0;
            for (int d = 0; d < 4; ++d) {
                const Texel q{p.x + kNeighbourDx[d], p.y + kNeighbourDy[d]};
                if (q.x < 0 || q.y < 0 || q.x >= width || q.y >= height) continue;
                diag += 1.0;
                rhs.row(k) += guidance_difference(labels, views, p, q).transpose();
                const int j = q.y * width + q.x;
                if (labels.label[static_cast<size_t>(j)] == kUnassigned) {
                    hasBoundary = true;
                    for (int ch = 0; ch < 3; ++ch) rhs(k, ch) += templ.color.at(q.x, q.y, ch);
                } else {
                    triplets.emplace_back(k, position.at(j), -1.0);
                }
            }
            triplets.emplace_back(k, k, diag);
        }
        SparseMatrix A(m, m);
        A.setFromTriplets(triplets.begin(), triplets.end());

        // Without a Dirichlet neighbour the system is singular: pin one texel, then restore the source mean.
        int pinned = -1;
        Vec3 sourceMean = Vec3::Zero();
        SparseMatrix S = A;
        Eigen::MatrixX3d b = rhs;
        if (!hasBoundary) {
            int sourced = 0;
            for (int i : texels) {
                const ViewSample& v = views[static_cast<size_t>(labels.label[static_cast<size_t>(i)])];
                if (v.valid[static_cast<size_t>(i)]) {
                    sourceMean += v.color[static_cast<size_t>(i)];
                    ++sourced;
                }
            }
            if (sourced > 0) sourceMean /= sourced;
            pinned = 0;
            for (int k = 0; k < S.outerSize(); ++k) {
                for (SparseMatrix::InnerIterator it(S, k); it; ++it) {
                    if (it.row() == pinned || it.col() == pinned) it.valueRef() = it.row() == it.col() ? 1.0 : 0.0;
                }
            }
            S.prune(0.0);
            b.row(pinned).setZero();
        }

        Eigen::SimplicialLDLT<SparseMatrix> solver(S);
        if (solver.info() != Eigen::Success) {
            failures[c] = "factorization failed";
            return;
        }
        Eigen::MatrixX3d f = solver.solve(b);
        for (int refine = 0; refine < 3; ++refine) {
            const Eigen::MatrixX3d r = b - S * f;
            if (r.cwiseAbs().maxCoeff() < 1e-10) break;
            f += solver.solve(r);
        }
        if (pinned >= 0) {
            const Vec3 shift = sourceMean - f.colwise().mean().transpose();
            f.rowwise() += shift.transpose();
        }
        const double residual = (rhs - A * f).cwiseAbs().maxCoeff();
        if (!(residual < 1e-6)) {
            failures[c] = "residual " + std::to_string(residual);
            return;
        }
        for (int k = 0; k < m; ++k) {
            const int i = texels[static_cast<size_t>(k)];
            for (int ch = 0; ch < 3; ++ch) {
                double value = f(k, ch);
                if (options.clamp) value = std::clamp(value, 0.0, 1.0);
                out.color.at(i % width, i / width, ch) = value;
            }
        }
    });
    for (size_t c = 0; c < failures.size(); ++c) {
        if (!failures[c].empty()) throw SolverError("poisson_blend: component " + std::to_string(c) + ": " + failures[c]);
    }
    return out;
}

ViewSample sample_view(const TriMesh& mesh, const Eigen::MatrixX2d& uv, const CameraModel& camera, const Image& image,
                       int width, int height)
{
    camera.validate();
    if (uv.rows() != mesh.vertex_count()) throw InvalidInput("sample_view: uv count differs from vertex count");
    if (image.empty()) throw InvalidInput("sample_view: empty image");
    const ChartRaster chart = rasterize_chart(uv, mesh.faces(), width, height);
    const RasterBuffer buffer = rasterize(mesh.vertices(), mesh.faces(), camera.intrinsics, camera.pose, image.width(), image.height());
    const Eigen::MatrixX3d normals = vertex_normals_matrix(mesh);
    const Eigen::MatrixX3d& V = mesh.vertices();
    const double tolerance = 0.005 * mesh.bbox_diagonal();
    const Vec3 center = camera.pose.center();

    ViewSample out(width, height);
    out.direction = (V.colwise().mean().transpose() - center).normalized();
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            if (!chart.covered(x, y)) continue;
            const size_t i = static_cast<size_t>(chart.index(x, y));
            const Face& f = mesh.faces()[static_cast<size_t>(chart.face[i])];
            const Vec3& w = chart.bary[i];
            Vec3 X = Vec3::Zero();
            Vec3 n = Vec3::Zero();
            for (int k = 0; k < 3; ++k) {
                X += w[k] * V.row(f[static_cast<size_t>(k)]).transpose();
                n += w[k] * normals.row(f[static_cast<size_t>(k)]).transpose();
            }
            if (n.norm() < 1e-12) continue;
            n.normalize();
            if (n.dot(center - X) <= 0.0) continue;
            const Vec3 pc = camera.pose.apply(X);
            if (pc.z() >= 0.0) continue;
            const Vec2 px = project(camera.intrinsics, pc);
            if (!image.contains(px.x(), px.y())) continue;
            // Every pixel of the bilinear footprint must show this surface.
            const int x0 = static_cast<int>(std::floor(px.x()));
            const int y0 = static_cast<int>(std::floor(px.y()));
            bool seen = true;
            for (int dy = 0; dy <= 1 && seen; ++dy) {
                for (int dx = 0; dx <= 1 && seen; ++dx) {
                    const int sx = std::min(x0 + dx, image.width() - 1);
                    const int sy = std::min(y0 + dy, image.height() - 1);
                    const double depth = buffer.depth[static_cast<size_t>(sy * buffer.width + sx)];
                    seen = std::isfinite(depth) && std::abs(depth + pc.z()) <= tolerance;
                }
            }
            if (!seen) continue;
            Vec3 c;
            for (int ch = 0; ch < 3; ++ch) c[ch] = std::clamp(image.sample(px.x(), px.y(), std::min(ch, image.channels() - 1)), 0.0, 1.0);
            out.color[i] = c;
            out.normal[i] = n;
            out.valid[i] = 1;
        }
    }
    return out;
}

FusionResult fuse_texture(const std::vector<ViewSample>& views, const TextureAtlas& templ, const LabelingOptions& options)
{
    std::vector<char> mask = coverage_mask(views);
    if (templ.mask.size() != mask.size()) throw InvalidInput("fuse_texture: template mask size differs from views");
    // Chart texels no view sees keep the template colour.
    for (size_t i = 0; i < mask.size(); ++i) mask[i] = static_cast<char>(mask[i] && templ.mask[i]);
    FusionResult out;
    out.labeling = solve_labeling(views, mask, options);
    out.atlas = poisson_blend(out.labeling.labels, views, templ);
    return out;
}

} // namespace carimirror
