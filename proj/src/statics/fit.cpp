// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#include <carimirror/error.hpp>
#include <carimirror/raster.hpp>
#include <carimirror/statics/fit.hpp>

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>

namespace carimirror {

namespace {

struct FitState
{
    Eigen::VectorXd a;
    Eigen::VectorXd b;
    std::vector<Pose> poses;
    std::vector<SHLighting> light;
    Eigen::VectorXd rho;
};

struct Context
{
    const ParametricBasis& basis;
    const MultiViewCapture& capture;
    const FitOptions& options;
    Intrinsics K;
    std::vector<Image> gray;
};

Eigen::MatrixX3d unit_normals(const Eigen::MatrixX3d& V, const std::vector<Face>& faces)
{
    Eigen::MatrixX3d N = Eigen::MatrixX3d::Zero(V.rows(), 3);
    for (const Face& f : faces) {
        const Eigen::RowVector3d n = face_normal_raw(V, f).transpose();
        for (int k : f) N.row(k) += n;
    }
    for (Eigen::Index i = 0; i < N.rows(); ++i) {
        const double len = N.row(i).norm();
        N.row(i) = len > 0.0 ? Eigen::RowVector3d(N.row(i) / len) : Eigen::RowVector3d(0, 0, 1);
    }
    return N;
}

// Smooth weight on the cosine between the normal and the direction to the camera.
double facing_weight(double cosine)
{
    const double t = std::clamp((cosine - 0.1) / 0.4, 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

struct Shading
{
    // Per view and vertex: weight c, observed intensity I, SH basis phi.
    std::vector<double> c;
    std::vector<double> intensity;
    std::vector<std::array<double, 9>> phi;
};

Shading shading_terms(const Context& ctx, const FitState& s, const Eigen::MatrixX3d& V)
{
    const auto& faces = ctx.basis.mean.faces();
    const Eigen::MatrixX3d N = unit_normals(V, faces);
    const int nv = static_cast<int>(V.rows());
    const int views = static_cast<int>(s.poses.size());
    Shading out;
    out.c.assign(static_cast<size_t>(nv * views), 0.0);
    out.intensity.assign(out.c.size(), 0.0);
    out.phi.resize(static_cast<size_t>(nv));
    for (int i = 0; i < nv; ++i) out.phi[static_cast<size_t>(i)] = sh_basis(N.row(i).transpose());
    for (int j = 0; j < views; ++j) {
        const Mat3 R = s.poses[static_cast<size_t>(j)].R();
        const Vec3 center = s.poses[static_cast<size_t>(j)].center();
        for (int i = 0; i < nv; ++i) {
            const Vec3 x = V.row(i).transpose();
            const Vec3 pc = R * x + s.poses[static_cast<size_t>(j)].translation;
            const size_t idx = static_cast<size_t>(j * nv + i);
            if (!(pc.z() < 0.0)) continue;
            const double cosine = N.row(i).dot((center - x).normalized());
            out.c[idx] = facing_weight(cosine);
            if (out.c[idx] == 0.0) continue;
            const Vec2 u = project(ctx.K, pc);
            out.intensity[idx] = ctx.gray[static_cast<size_t>(j)].sample(u.x(), u.y());
        }
    }
    return out;
}

double dot9(const std::array<double, 9>& p, const SHLighting& l)
{
    double s = 0.0;
    for (size_t k = 0; k < 9; ++k) s += p[k] * l.gamma[k];
    return s;
}

Eigen::VectorXd residuals(const Context& ctx, const FitState& s)
{
    const auto& lm = ctx.basis.landmarks.indices;
    const int L = static_cast<int>(lm.size());
    const int views = static_cast<int>(s.poses.size());
    const int nv = ctx.basis.mean.vertex_count();
    const Eigen::MatrixX3d V = ctx.basis.evaluate(s.a, s.b);
    const Shading sh = shading_terms(ctx, s, V);

    Eigen::VectorXd r(2 * L * views + nv * views + s.a.size() + s.b.size());
    Eigen::Index k = 0;
    const double wl = std::sqrt(ctx.options.landmarkWeight);
    for (int j = 0; j < views; ++j) {
        const Pose& pose = s.poses[static_cast<size_t>(j)];
        const Mat3 R = pose.R();
        for (int l = 0; l < L; ++l) {
            const Vec3 pc = R * V.row(lm[static_cast<size_t>(l)]).transpose() + pose.translation;
            if (!(pc.z() < 0.0)) {
                r.segment<2>(k).setConstant(std::numeric_limits<double>::infinity());
            } else {
                r.segment<2>(k) = wl * (project(ctx.K, pc) - ctx.capture.views[static_cast<size_t>(j)].landmarks[static_cast<size_t>(l)]);
            }
            k += 2;
        }
    }
    for (int j = 0; j < views; ++j) {
        for (int i = 0; i < nv; ++i) {
            const size_t idx = static_cast<size_t>(j * nv + i);
            const double pred = s.rho[i] * dot9(sh.phi[static_cast<size_t>(i)], s.light[static_cast<size_t>(j)]);
            r[k++] = std::sqrt(ctx.options.photoWeight * sh.c[idx]) * (sh.intensity[idx] - pred);
        }
    }
    const double wr = std::sqrt(ctx.options.regularization);
    r.segment(k, s.a.size()) = wr * s.a;
    k += s.a.size();
    r.segment(k, s.b.size()) = wr * s.b;
    return r;
}

double energy(const Context& ctx, const FitState& s)
{
    const Eigen::VectorXd r = residuals(ctx, s);
    return r.allFinite() ? r.squaredNorm() : std::numeric_limits<double>::infinity();
}

FitState apply_step(const FitState& s, const Eigen::VectorXd& d)
{
    FitState out = s;
    const auto na = s.a.size();
    const auto nb = s.b.size();
    out.a += d.head(na);
    out.b += d.segment(na, nb);
    for (size_t j = 0; j < s.poses.size(); ++j) {
        const auto off = na + nb + 6 * static_cast<Eigen::Index>(j);
        out.poses[j] = perturb(s.poses[j], d.segment<3>(off), d.segment<3>(off + 3));
    }
    return out;
}

// Levenberg-Marquardt steps on coefficients and poses with a forward-difference Jacobian.
void lm_geometry(const Context& ctx, FitState& s, double& e, double& damping, int steps)
{
    const auto na = s.a.size();
    const auto nb = s.b.size();
    const auto np = na + nb + 6 * static_cast<Eigen::Index>(s.poses.size());
    for (int step = 0; step < steps; ++step) {
        const Eigen::VectorXd r0 = residuals(ctx, s);
        Eigen::MatrixXd J(r0.size(), np);
        for (Eigen::Index p = 0; p < np; ++p) {
            const Eigen::Index local = p < na + nb ? -1 : (p - na - nb) % 6;
            const double h = local < 0 ? 1e-5 : (local < 3 ? 1e-7 : 1e-5);
            Eigen::VectorXd d = Eigen::VectorXd::Zero(np);
            d[p] = h;
            J.col(p) = (residuals(ctx, apply_step(s, d)) - r0) / h;
        }
        if (!J.allFinite()) return;
        const Eigen::MatrixXd JtJ = J.transpose() * J;
        const Eigen::VectorXd g = J.transpose() * r0;
        bool accepted = false;
        for (int attempt = 0; attempt < 12 && !accepted; ++attempt) {
            Eigen::MatrixXd A = JtJ;
            A.diagonal() += damping * JtJ.diagonal().cwiseMax(1e-9);
            const Eigen::VectorXd d = -A.ldlt().solve(g);
            if (!d.allFinite()) {
                damping *= 4.0;
                continue;
            }
            FitState cand = apply_step(s, d);
            const double ec = energy(ctx, cand);
            if (ec < e) {
                s = std::move(cand);
                e = ec;
                damping = std::max(damping / 3.0, 1e-9);
                accepted = true;
            } else {
                damping *= 4.0;
            }
        }
        if (!accepted) return;
    }
}

void update_lighting(const Context& ctx, FitState& s, double& e)
{
    const Eigen::MatrixX3d V = ctx.basis.evaluate(s.a, s.b);
    const Shading sh = shading_terms(ctx, s, V);
    const int nv = static_cast<int>(V.rows());
    FitState cand = s;
    for (size_t j = 0; j < s.poses.size(); ++j) {
        Eigen::Matrix<double, 9, 9> A = Eigen::Matrix<double, 9, 9>::Identity() * 1e-12;
        Eigen::Matrix<double, 9, 1> rhs = Eigen::Matrix<double, 9, 1>::Zero();
        for (int i = 0; i < nv; ++i) {
            const size_t idx = j * static_cast<size_t>(nv) + static_cast<size_t>(i);
            if (sh.c[idx] == 0.0) continue;
            const Eigen::Map<const Eigen::Matrix<double, 9, 1>> phi(sh.phi[static_cast<size_t>(i)].data());
            const Eigen::Matrix<double, 9, 1> q = s.rho[i] * phi;
            A += sh.c[idx] * q * q.transpose();
            rhs += sh.c[idx] * sh.intensity[idx] * q;
        }
        const Eigen::Matrix<double, 9, 1> gamma = A.ldlt().solve(rhs);
        if (gamma.allFinite()) {
            for (int k = 0; k < 9; ++k) cand.light[j].gamma[static_cast<size_t>(k)] = gamma[k];
        }
    }
    const double ec = energy(ctx, cand);
    if (ec <= e) {
        s = std::move(cand);
        e = ec;
    }
}

void update_albedo(const Context& ctx, FitState& s, double& e)
{
    const Eigen::MatrixX3d V = ctx.basis.evaluate(s.a, s.b);
    const Shading sh = shading_terms(ctx, s, V);
    const int nv = static_cast<int>(V.rows());
    FitState cand = s;
    for (int i = 0; i < nv; ++i) {
        double num = 0.0;
        double den = 0.0;
        for (size_t j = 0; j < s.poses.size(); ++j) {
            const size_t idx = j * static_cast<size_t>(nv) + static_cast<size_t>(i);
            const double shade = dot9(sh.phi[static_cast<size_t>(i)], s.light[j]);
            num += sh.c[idx] * sh.intensity[idx] * shade;
            den += sh.c[idx] * shade * shade;
        }
        if (den > 1e-12) cand.rho[i] = std::clamp(num / den, 0.0, 1.0);
    }
    const double ec = energy(ctx, cand);
    if (ec <= e) {
        s = std::move(cand);
        e = ec;
    }
}

Pose initial_pose(const Context& ctx, int view)
{
    const auto& lm = ctx.basis.landmarks.indices;
    std::vector<Vec3> P;
    for (int id : lm) P.push_back(ctx.basis.mean.vertex(id));
    const auto& obs = ctx.capture.views[static_cast<size_t>(view)].landmarks;

    Vec2 c2 = Vec2::Zero();
    Vec3 c3 = Vec3::Zero();
    for (size_t l = 0; l < P.size(); ++l) {
        c2 += obs[l];
        c3 += P[l];
    }
    c2 /= static_cast<double>(P.size());
    c3 /= static_cast<double>(P.size());
    double s2 = 0.0;
    double s3 = 0.0;
    for (size_t l = 0; l < P.size(); ++l) {
        s2 += (obs[l] - c2).squaredNorm();
        s3 += (P[l] - c3).head<2>().squaredNorm();
    }
    if (!(s2 > 0.0)) throw DegenerateError("landmarks of view " + std::to_string(view) + " coincide");
    const double depth = ctx.K.fx * std::sqrt(s3 / s2);

    PoseFit best;
    best.cost = std::numeric_limits<double>::infinity();
    for (double yaw : ctx.options.initialYawsDeg) {
        Pose init = look_at_face(yaw, 0.0, depth);
        init.translation -= init.rotation * c3;
        init.translation.x() += (c2.x() - ctx.K.cx) * depth / ctx.K.fx;
        init.translation.y() -= (c2.y() - ctx.K.cy) * depth / ctx.K.fy;
        const PoseFit f = fit_pose(P, obs, ctx.K, init, 30);
        if (f.cost < best.cost) best = f;
    }
    if (!std::isfinite(best.cost)) throw SolverError("could not initialize pose of view " + std::to_string(view));
    return best.pose;
}

AlbedoMap build_albedo(const Context& ctx, const FitState& s, const TriMesh& mesh)
{
    AlbedoMap out;
    out.vertex = s.rho;
    const int size = std::max(2, ctx.options.albedoTextureSize);
    out.texture = Image(size, size, 1, 0.0);
    const ChartRaster chart = rasterize_chart(ctx.basis.uv, mesh.faces(), size, size);
    const Eigen::MatrixX3d N = unit_normals(mesh.vertices(), mesh.faces());
    std::vector<RasterBuffer> depth;
    for (size_t j = 0; j < s.poses.size(); ++j) {
        const Image& img = ctx.gray[j];
        depth.push_back(rasterize(mesh.vertices(), mesh.faces(), ctx.K, s.poses[j], img.width(), img.height()));
    }
    const double tol = 5e-3 * mesh.bbox_diagonal();
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const int f = chart.face[static_cast<size_t>(chart.index(x, y))];
            if (f < 0) continue;
            const Vec3& bc = chart.bary[static_cast<size_t>(chart.index(x, y))];
            const Face& face = mesh.faces()[static_cast<size_t>(f)];
            Vec3 p = Vec3::Zero();
            Vec3 n = Vec3::Zero();
            double rhoInterp = 0.0;
            for (int k = 0; k < 3; ++k) {
                p += bc[k] * mesh.vertex(face[static_cast<size_t>(k)]);
                n += bc[k] * N.row(face[static_cast<size_t>(k)]).transpose();
                rhoInterp += bc[k] * s.rho[face[static_cast<size_t>(k)]];
            }
            n.normalize();
            double value = rhoInterp;
            double bestCos = 0.2;
            for (size_t j = 0; j < s.poses.size(); ++j) {
                const Vec3 pc = s.poses[j].apply(p);
                if (!(pc.z() < 0.0)) continue;
                const double cosine = n.dot((s.poses[j].center() - p).normalized());
                if (cosine <= bestCos) continue;
                const Vec2 u = project(ctx.K, pc);
                const Image& img = ctx.gray[j];
                if (!img.contains(u.x(), u.y())) continue;
                const int px = std::clamp(static_cast<int>(std::lround(u.x())), 0, img.width() - 1);
                const int py = std::clamp(static_cast<int>(std::lround(u.y())), 0, img.height() - 1);
                if (-pc.z() > depth[j].depth[static_cast<size_t>(py * img.width() + px)] + tol) continue;
                const double shade = sh_irradiance(n, 1.0, s.light[j]);
                if (shade < 1e-3) continue;
                bestCos = cosine;
                value = std::clamp(img.sample(u.x(), u.y()) / shade, 0.0, 1.0);
            }
            out.texture.at(x, y) = value;
        }
    }
    return out;
}

} // namespace

FitResult fit_parametric_model(const MultiViewCapture& capture, const ParametricBasis& basis, const FitOptions& options)
{
    const int L = static_cast<int>(basis.landmarks.indices.size());
    capture.validate(L);
    basis.landmarks.validate(basis.mean.vertex_count());
    if (basis.identity.rows() != 3 * basis.mean.vertex_count() || basis.expression.rows() != 3 * basis.mean.vertex_count()) {
        throw InvalidInput("parametric basis row count does not match the mean mesh");
    }

    Context ctx{basis, capture, options, {}, {}};
    const Image& first = capture.views.front().image;
    if (options.intrinsics) {
        ctx.K = *options.intrinsics;
    } else {
        const double f = 1.5 * first.width();
        ctx.K = {f, f, 0.5 * (first.width() - 1), 0.5 * (first.height() - 1)};
    }
    if (!(ctx.K.fx > 0.0) || !(ctx.K.fy > 0.0)) throw InvalidInput("fit intrinsics must have positive focal lengths");
    for (const auto& v : capture.views) ctx.gray.push_back(v.image.channels() == 1 ? v.image : v.image.to_gray());

    FitState s;
    s.a = Eigen::VectorXd::Zero(basis.identity.cols());
    s.b = Eigen::VectorXd::Zero(basis.expression.cols());
    s.rho = Eigen::VectorXd::Constant(basis.mean.vertex_count(), 0.5);
    SHLighting ambient;
    ambient.gamma[0] = 1.0 / sh_basis(Vec3::UnitZ())[0];
    s.light.assign(capture.views.size(), ambient);
    for (int j = 0; j < capture.view_count(); ++j) s.poses.push_back(initial_pose(ctx, j));

    FitResult out;
    double e = energy(ctx, s);
    if (!std::isfinite(e)) throw SolverError("coarse fit: initial energy is not finite (landmarks behind a camera?)");
    out.energy.push_back(e);
    double damping = 1e-3;
    int increases = 0;
    for (int it = 0; it < options.outerIterations; ++it) {
        const double before = e;
        update_lighting(ctx, s, e);
        update_albedo(ctx, s, e);
        lm_geometry(ctx, s, e, damping, options.lmStepsPerIteration);
        if (!std::isfinite(e)) throw SolverError("coarse fit: energy became non-finite at iteration " + std::to_string(it));
        increases = e > before * (1.0 + 1e-9) ? increases + 1 : 0;
        if (increases >= 3) {
            throw SolverError("coarse fit diverged: energy rose for 3 consecutive iterations (last " + std::to_string(e) + ")");
        }
        out.energy.push_back(e);
    }

    out.identity = s.a;
    out.expression = s.b;
    out.mesh = basis.mean.with_vertices(basis.evaluate(s.a, s.b));
    for (const Pose& p : s.poses) out.cameras.push_back({ctx.K, p});
    out.lighting = s.light;
    out.albedo = build_albedo(ctx, s, out.mesh);

    double sq = 0.0;
    for (int j = 0; j < capture.view_count(); ++j) {
        for (int l = 0; l < L; ++l) {
            const Vec3 pc = s.poses[static_cast<size_t>(j)].apply(out.mesh.vertex(basis.landmarks.indices[static_cast<size_t>(l)]));
            sq += (project(ctx.K, pc) - capture.views[static_cast<size_t>(j)].landmarks[static_cast<size_t>(l)]).squaredNorm();
        }
    }
    out.landmarkRmse = std::sqrt(sq / (capture.view_count() * L));
    return out;
}

} // namespace carimirror
