// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#include <carimirror/error.hpp>
#include <carimirror/statics/bundle.hpp>

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include <cmath>
#include <limits>

namespace carimirror {

double bundle_cost(const BundleProblem& p)
{
    double e = 0.0;
    for (const auto& o : p.observations) {
        const Vec3 pc = p.poses[static_cast<size_t>(o.view)].apply(p.points[static_cast<size_t>(o.point)]);
        if (!(pc.z() < 0.0)) return std::numeric_limits<double>::infinity();
        e += (project(p.intrinsics, pc) - o.pixel).squaredNorm();
    }
    return e;
}

double bundle_mean_error(const BundleProblem& p)
{
    if (p.observations.empty()) return 0.0;
    double e = 0.0;
    for (const auto& o : p.observations) {
        const Vec3 pc = p.poses[static_cast<size_t>(o.view)].apply(p.points[static_cast<size_t>(o.point)]);
        e += (project(p.intrinsics, pc) - o.pixel).norm();
    }
    return e / static_cast<double>(p.observations.size());
}

namespace {

// Orthonormal tangent basis of the unit sphere at d.
std::pair<Vec3, Vec3> tangent_basis(const Vec3& d)
{
    const Vec3 helper = std::abs(d.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    const Vec3 e1 = d.cross(helper).normalized();
    return {e1, d.cross(e1)};
}

struct Layout
{
    int views = 0;
    bool focal = false;
    std::vector<int> offset; // -1 for the pinned camera
    int cameraParams = 0;
    int focalIndex = -1;

    int block(int view) const { return view == 1 ? 5 : 6; }
};

Layout make_layout(int views, bool focal)
{
    Layout l;
    l.views = views;
    l.focal = focal;
    l.offset.assign(static_cast<size_t>(views), -1);
    int k = 0;
    for (int j = 1; j < views; ++j) {
        l.offset[static_cast<size_t>(j)] = k;
        k += l.block(j);
    }
    if (focal) l.focalIndex = k++;
    l.cameraParams = k;
    return l;
}

struct Gauge
{
    Vec3 c0;
    double baseline = 0.0;
};

BundleProblem apply_step(const BundleProblem& p, const Layout& l, const Gauge& g, const Eigen::VectorXd& dc,
                         const std::vector<Vec3>& dx, const std::vector<int>& pointSlot)
{
    BundleProblem out = p;
    for (int j = 1; j < l.views; ++j) {
        const int o = l.offset[static_cast<size_t>(j)];
        Pose& pose = out.poses[static_cast<size_t>(j)];
        if (j == 1) {
            const Vec3 dir = (p.poses[1].center() - g.c0).normalized();
            const auto [e1, e2] = tangent_basis(dir);
            const Vec3 newDir = (dir + dc[o + 3] * e1 + dc[o + 4] * e2).normalized();
            pose.rotation = (quat_exp(dc.segment<3>(o)) * pose.rotation).normalized();
            pose.translation = -(pose.rotation * (g.c0 + g.baseline * newDir));
        } else {
            pose = perturb(pose, dc.segment<3>(o), dc.segment<3>(o + 3));
        }
    }
    if (l.focal) {
        out.intrinsics.fx += dc[l.focalIndex];
        out.intrinsics.fy += dc[l.focalIndex];
    }
    for (size_t i = 0; i < p.points.size(); ++i) {
        if (pointSlot[i] >= 0) out.points[i] += dx[static_cast<size_t>(pointSlot[i])];
    }
    return out;
}

} // namespace

BundleResult bundle_adjust(const BundleProblem& problem, const BundleOptions& options)
{
    const int views = static_cast<int>(problem.poses.size());
    if (views < 2) throw DegenerateError("bundle_adjust: at least two views are required");
    if (!(problem.intrinsics.fx > 0.0) || !(problem.intrinsics.fy > 0.0)) throw InvalidInput("bundle_adjust: focal lengths must be positive");
    const int np = static_cast<int>(problem.points.size());
    std::vector<int> obsCount(static_cast<size_t>(np), 0);
    std::vector<char> viewUsed(static_cast<size_t>(views), 0);
    for (const auto& o : problem.observations) {
        if (o.point < 0 || o.point >= np || o.view < 0 || o.view >= views) throw InvalidInput("bundle_adjust: observation index out of range");
        ++obsCount[static_cast<size_t>(o.point)];
        viewUsed[static_cast<size_t>(o.view)] = 1;
    }
    for (int j = 0; j < views; ++j) {
        if (!viewUsed[static_cast<size_t>(j)]) throw DegenerateError("bundle_adjust: view " + std::to_string(j) + " has no observations");
    }
    std::vector<int> slot(static_cast<size_t>(np), -1);
    std::vector<int> slotPoint;
    for (int i = 0; i < np; ++i) {
        if (obsCount[static_cast<size_t>(i)] >= 2) {
            slot[static_cast<size_t>(i)] = static_cast<int>(slotPoint.size());
            slotPoint.push_back(i);
        }
    }
    const int ns = static_cast<int>(slotPoint.size());
    if (ns < 6) throw DegenerateError("bundle_adjust: fewer than 6 points seen in two or more views");
    {
        Vec3 mean = Vec3::Zero();
        for (int i : slotPoint) mean += problem.points[static_cast<size_t>(i)];
        mean /= ns;
        Eigen::MatrixX3d c(ns, 3);
        for (int k = 0; k < ns; ++k) c.row(k) = (problem.points[static_cast<size_t>(slotPoint[static_cast<size_t>(k)])] - mean).transpose();
        const Eigen::JacobiSVD<Eigen::MatrixX3d> svd(c);
        const Vec3 sv = svd.singularValues();
        if (!(sv[1] > 1e-9 * sv[0])) throw DegenerateError("bundle_adjust: point cloud is collinear");
    }
    const Gauge gauge{problem.poses[0].center(), (problem.poses[1].center() - problem.poses[0].center()).norm()};
    if (!(gauge.baseline > 0.0)) throw DegenerateError("bundle_adjust: first two cameras share a centre; scale gauge undefined");

    const Layout layout = make_layout(views, options.optimizeFocal);
    const int nc = layout.cameraParams;

    BundleResult result;
    result.solution = problem;
    result.initialMeanError = bundle_mean_error(problem);
    double cost = bundle_cost(problem);
    if (!std::isfinite(cost)) throw DegenerateError("bundle_adjust: a point lies behind a camera at initialization");
    double mu = 1e-4;

    for (int iter = 0; iter < options.maxIterations; ++iter) {
        const BundleProblem& cur = result.solution;
        Eigen::MatrixXd C = Eigen::MatrixXd::Zero(nc, nc);
        Eigen::VectorXd gc = Eigen::VectorXd::Zero(nc);
        std::vector<Mat3> P(static_cast<size_t>(ns), Mat3::Zero());
        std::vector<Vec3> gp(static_cast<size_t>(ns), Vec3::Zero());
        std::vector<Eigen::MatrixXd> W(static_cast<size_t>(ns), Eigen::MatrixXd::Zero(nc, 3));

        std::vector<Mat3> rot(static_cast<size_t>(views));
        for (int j = 0; j < views; ++j) rot[static_cast<size_t>(j)] = cur.poses[static_cast<size_t>(j)].R();
        Vec3 e1 = Vec3::Zero();
        Vec3 e2 = Vec3::Zero();
        {
            const Vec3 dir = (cur.poses[1].center() - gauge.c0).normalized();
            std::tie(e1, e2) = tangent_basis(dir);
        }
        for (const auto& o : cur.observations) {
            const int s = slot[static_cast<size_t>(o.point)];
            if (s < 0) continue;
            const Mat3& R = rot[static_cast<size_t>(o.view)];
            const Vec3& x = cur.points[static_cast<size_t>(o.point)];
            const Vec3 pc = R * x + cur.poses[static_cast<size_t>(o.view)].translation;
            const Eigen::Matrix<double, 2, 3> Jp = project_jacobian(cur.intrinsics, pc);
            const Vec2 r = project(cur.intrinsics, pc) - o.pixel;

            Eigen::MatrixXd Jc = Eigen::MatrixXd::Zero(2, nc);
            const int off = layout.offset[static_cast<size_t>(o.view)];
            if (o.view == 1) {
                Jc.block<2, 3>(0, off) = -Jp * skew(pc);
                Jc.col(off + 3) = -Jp * R * (gauge.baseline * e1);
                Jc.col(off + 4) = -Jp * R * (gauge.baseline * e2);
            } else if (o.view > 1) {
                Jc.block<2, 3>(0, off) = -Jp * skew(R * x);
                Jc.block<2, 3>(0, off + 3) = Jp;
            }
            if (layout.focal) {
                const double depth = -pc.z();
                Jc(0, layout.focalIndex) = pc.x() / depth;
                Jc(1, layout.focalIndex) = -pc.y() / depth;
            }
            const Eigen::Matrix<double, 2, 3> Jx = Jp * R;
            C += Jc.transpose() * Jc;
            gc += Jc.transpose() * r;
            P[static_cast<size_t>(s)] += Jx.transpose() * Jx;
            gp[static_cast<size_t>(s)] += Jx.transpose() * r;
            W[static_cast<size_t>(s)] += Jc.transpose() * Jx;
        }

        bool accepted = false;
        for (int attempt = 0; attempt < 15 && !accepted; ++attempt) {
            Eigen::MatrixXd S = C;
            S.diagonal() += mu * C.diagonal().cwiseMax(1e-12);
            Eigen::VectorXd rhs = -gc;
            std::vector<Mat3> Pinv(static_cast<size_t>(ns));
            for (int k = 0; k < ns; ++k) {
                Mat3 Pk = P[static_cast<size_t>(k)];
                Pk.diagonal() += mu * Pk.diagonal().cwiseMax(1e-12);
                Pinv[static_cast<size_t>(k)] = Pk.inverse();
                const Eigen::MatrixXd WPinv = W[static_cast<size_t>(k)] * Pinv[static_cast<size_t>(k)];
                S -= WPinv * W[static_cast<size_t>(k)].transpose();
                rhs += WPinv * gp[static_cast<size_t>(k)];
            }
            const Eigen::VectorXd dc = nc > 0 ? Eigen::VectorXd(S.ldlt().solve(rhs)) : Eigen::VectorXd();
            std::vector<Vec3> dx(static_cast<size_t>(ns));
            bool finite = dc.allFinite();
            for (int k = 0; k < ns && finite; ++k) {
                dx[static_cast<size_t>(k)] = Pinv[static_cast<size_t>(k)] * (-gp[static_cast<size_t>(k)] - W[static_cast<size_t>(k)].transpose() * dc);
                finite = dx[static_cast<size_t>(k)].allFinite();
            }
            if (!finite) {
                mu *= 10.0;
                continue;
            }
            BundleProblem cand = apply_step(cur, layout, gauge, dc, dx, slot);
            const double cc = bundle_cost(cand);
            if (cc < cost) {
                const double rel = (cost - cc) / std::max(cost, 1e-300);
                result.solution = std::move(cand);
                cost = cc;
                mu = std::max(mu / 3.0, 1e-12);
                accepted = true;
                ++result.iterations;
                if (rel < options.relativeTolerance) iter = options.maxIterations;
            } else {
                mu *= 10.0;
            }
        }
        if (!accepted || cost < 1e-28) break;
    }
    result.finalMeanError = bundle_mean_error(result.solution);
    return result;
}

BundleResult bundle_adjust(const DisplacementField& field, const std::vector<CameraModel>& cameras,
                           const TriMesh& coarse, const BundleOptions& options)
{
    if (static_cast<int>(cameras.size()) != field.viewCount) throw InvalidInput("bundle_adjust: one camera per view required");
    if (coarse.vertex_count() != field.vertexCount) throw InvalidInput("bundle_adjust: field and mesh disagree on vertex count");
    BundleProblem p;
    p.intrinsics = cameras.front().intrinsics;
    for (const auto& c : cameras) p.poses.push_back(c.pose);
    std::vector<int> ids;
    for (int i = 0; i < field.vertexCount; ++i) {
        if (!field.refined[static_cast<size_t>(i)]) continue;
        const int point = static_cast<int>(p.points.size());
        p.points.push_back(coarse.vertex(i));
        ids.push_back(i);
        for (int j = 0; j < field.viewCount; ++j) {
            if (field.visible[field.at(i, j)]) p.observations.push_back({point, j, field.target(i, j)});
        }
    }
    BundleResult r = bundle_adjust(p, options);
    r.vertexIds = std::move(ids);
    return r;
}

} // namespace carimirror
