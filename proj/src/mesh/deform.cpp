// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#include <carimirror/deform.hpp>
#include <carimirror/error.hpp>

#include <Eigen/Geometry>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <limits>

namespace carimirror {

namespace {

Eigen::MatrixX3d solve_spd(const SparseMatrix& A, const Eigen::MatrixX3d& rhs, const char* what)
{
    SparseMatrix system;
    Eigen::SimplicialLDLT<SparseMatrix> solver;
    solver.compute(A);
    if (solver.info() != Eigen::Success) throw DegenerateError(std::string(what) + ": factorization failed (singular system)");
    Eigen::MatrixX3d x = solver.solve(rhs);
    if (solver.info() != Eigen::Success || !x.allFinite()) throw DegenerateError(std::string(what) + ": solve failed");
    // One step of iterative refinement keeps the residual near machine precision on stiff systems.
    const Eigen::MatrixX3d r = rhs - A * x;
    x += solver.solve(r);
    return x;
}

} // namespace

double laplacian_deform_energy(const TriMesh& rest,
                               const SparseMatrix& laplacian,
                               const Eigen::MatrixX3d& candidate,
                               std::span<const DeformConstraint> constraints)
{
    const Eigen::MatrixX3d d = candidate - rest.vertices();
    double e = (laplacian * d).squaredNorm();
    for (const auto& c : constraints) {
        if (!std::isfinite(c.weight) || c.weight == 0.0) continue;
        e += c.weight * (candidate.row(c.vertexIndex).transpose() - c.targetPosition).squaredNorm();
    }
    return e;
}

TriMesh laplacian_deform(const TriMesh& mesh, std::span<const DeformConstraint> constraints)
{
    const int n = mesh.vertex_count();
    bool anyActive = false;
    for (const auto& c : constraints) {
        if (c.vertexIndex < 0 || c.vertexIndex >= n) throw InvalidInput("constraint vertex index out of range");
        if (!(c.weight >= 0.0)) throw InvalidInput("constraint weight must be nonnegative");
        if (c.weight > 0.0) anyActive = true;
    }
    if (!anyActive) throw DegenerateError("laplacian_deform: no constraint with positive weight; system is singular");

    const SparseMatrix L = cotangent_laplacian(mesh);
    const SparseMatrix LtL = (L.transpose() * L).pruned();

    // Hard constraints are eliminated; soft ones add to the diagonal.
    std::vector<int> hardIndex(static_cast<size_t>(n), -1);
    Eigen::MatrixX3d disp = Eigen::MatrixX3d::Zero(n, 3);
    Eigen::VectorXd softW = Eigen::VectorXd::Zero(n);
    Eigen::MatrixX3d softRhs = Eigen::MatrixX3d::Zero(n, 3);
    for (const auto& c : constraints) {
        const Vec3 r = c.targetPosition - mesh.vertex(c.vertexIndex);
        if (std::isinf(c.weight)) {
            hardIndex[static_cast<size_t>(c.vertexIndex)] = 1;
            disp.row(c.vertexIndex) = r.transpose();
        } else if (c.weight > 0.0) {
            softW[c.vertexIndex] += c.weight;
            softRhs.row(c.vertexIndex) += c.weight * r.transpose();
        }
    }

    std::vector<int> freeMap(static_cast<size_t>(n), -1);
    int nFree = 0;
    for (int i = 0; i < n; ++i) {
        if (hardIndex[static_cast<size_t>(i)] < 0) freeMap[static_cast<size_t>(i)] = nFree++;
    }
    if (nFree == 0) {
        return mesh.with_vertices(mesh.vertices() + disp);
    }

    std::vector<Eigen::Triplet<double>> trip;
    Eigen::MatrixX3d rhs = Eigen::MatrixX3d::Zero(nFree, 3);
    for (int k = 0; k < LtL.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it(LtL, k); it; ++it) {
            const int r = freeMap[static_cast<size_t>(it.row())];
            if (r < 0) continue;
            const int col = static_cast<int>(it.col());
            const int cf = freeMap[static_cast<size_t>(col)];
            if (cf >= 0) {
                trip.emplace_back(r, cf, it.value());
            } else {
                rhs.row(r) -= it.value() * disp.row(col);
            }
        }
    }
    for (int i = 0; i < n; ++i) {
        const int r = freeMap[static_cast<size_t>(i)];
        if (r < 0) continue;
        if (softW[i] > 0.0) trip.emplace_back(r, r, softW[i]);
        rhs.row(r) += softRhs.row(i);
    }
    SparseMatrix A(nFree, nFree);
    A.setFromTriplets(trip.begin(), trip.end());

    const Eigen::MatrixX3d x = solve_spd(A, rhs, "laplacian_deform");
    for (int i = 0; i < n; ++i) {
        const int r = freeMap[static_cast<size_t>(i)];
        if (r >= 0) disp.row(i) = x.row(r);
    }
    return mesh.with_vertices(mesh.vertices() + disp);
}

Mat3 triangle_deformation_gradient(const Vec3& a0, const Vec3& b0, const Vec3& c0,
                                   const Vec3& a1, const Vec3& b1, const Vec3& c1)
{
    auto frame = [](const Vec3& a, const Vec3& b, const Vec3& c, bool& ok) {
        const Vec3 e1 = b - a;
        const Vec3 e2 = c - a;
        const Vec3 n = e1.cross(e2);
        const double len = n.norm();
        const double scale = std::max(e1.squaredNorm(), e2.squaredNorm());
        ok = len > 1e-12 * scale && len > 0.0;
        Mat3 m;
        m.col(0) = e1;
        m.col(1) = e2;
        m.col(2) = ok ? Vec3(n / std::sqrt(len)) : Vec3::Zero();
        return m;
    };
    bool okRest = false;
    bool okDef = false;
    const Mat3 rest = frame(a0, b0, c0, okRest);
    const Mat3 def = frame(a1, b1, c1, okDef);
    if (!okRest || !okDef) return Mat3::Identity();
    return def * rest.inverse();
}

struct DeformationTransfer::Impl
{
    static constexpr int kPinned = 0;

    TriMesh srcRest;
    TriMesh tgtRest;
    std::vector<double> faceWeight;
    SparseMatrix system;
    Eigen::SimplicialLDLT<SparseMatrix> solver;
    /// Column kPinned of the assembled matrix, used to move the pinned vertex to the right-hand side.
    Eigen::VectorXd pinnedColumn;

    static int reduced(int i) { return i < kPinned ? i : i - 1; }
};

DeformationTransfer::DeformationTransfer(const TriMesh& srcRest, const TriMesh& tgtRest)
    : m_impl(std::make_unique<Impl>())
{
    if (!srcRest.same_topology(tgtRest)) throw InvalidInput("deformation_transfer: meshes do not share topology");
    m_impl->srcRest = srcRest;
    m_impl->tgtRest = tgtRest;
    const int n = tgtRest.vertex_count();
    if (n < 2) throw InvalidInput("deformation_transfer: mesh needs at least two vertices");
    const auto& T0 = tgtRest.vertices();

    // Edge-based least squares: each target edge should equal Q_t applied to its rest edge,
    // weighted by the target rest area. This is a weighted graph Laplacian system.
    double meanArea = 0.0;
    for (const Face& f : tgtRest.faces()) meanArea += 0.5 * face_normal_raw(T0, f).norm();
    meanArea = std::max(meanArea / static_cast<double>(std::max<size_t>(tgtRest.faces().size(), 1)), 1e-300);

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(tgtRest.faces().size() * 12);
    m_impl->faceWeight.reserve(tgtRest.faces().size());
    for (const Face& f : tgtRest.faces()) {
        // Relative area weight; a tiny floor keeps every edge coupled.
        const double w = std::max(0.5 * face_normal_raw(T0, f).norm() / meanArea, 1e-8);
        m_impl->faceWeight.push_back(w);
        for (int c = 0; c < 3; ++c) {
            const int i = f[static_cast<size_t>(c)];
            const int j = f[static_cast<size_t>((c + 1) % 3)];
            trip.emplace_back(i, i, w);
            trip.emplace_back(j, j, w);
            trip.emplace_back(i, j, -w);
            trip.emplace_back(j, i, -w);
        }
    }
    SparseMatrix A(n, n);
    A.setFromTriplets(trip.begin(), trip.end());

    std::vector<Eigen::Triplet<double>> red;
    red.reserve(static_cast<size_t>(A.nonZeros()));
    m_impl->pinnedColumn = Eigen::VectorXd::Zero(n - 1);
    for (int k = 0; k < A.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it(A, k); it; ++it) {
            const int r = static_cast<int>(it.row());
            const int c = static_cast<int>(it.col());
            if (r == Impl::kPinned) continue;
            if (c == Impl::kPinned) {
                m_impl->pinnedColumn[Impl::reduced(r)] += it.value();
            } else {
                red.emplace_back(Impl::reduced(r), Impl::reduced(c), it.value());
            }
        }
    }
    SparseMatrix Ar(n - 1, n - 1);
    Ar.setFromTriplets(red.begin(), red.end());
    m_impl->system = Ar;
    m_impl->solver.compute(m_impl->system);
    if (m_impl->solver.info() != Eigen::Success) throw DegenerateError("deformation_transfer: factorization failed (disconnected mesh?)");
}

DeformationTransfer::~DeformationTransfer() = default;
DeformationTransfer::DeformationTransfer(DeformationTransfer&&) noexcept = default;
DeformationTransfer& DeformationTransfer::operator=(DeformationTransfer&&) noexcept = default;

TriMesh DeformationTransfer::transfer(const TriMesh& srcDeformed) const
{
    const Impl& m = *m_impl;
    if (!m.srcRest.same_topology(srcDeformed)) throw InvalidInput("deformation_transfer: meshes do not share topology");
    const int n = m.tgtRest.vertex_count();
    const auto& S0 = m.srcRest.vertices();
    const auto& S1 = srcDeformed.vertices();
    const auto& T0 = m.tgtRest.vertices();
    const Vec3 pinPos = T0.row(Impl::kPinned).transpose() + (S1.row(Impl::kPinned) - S0.row(Impl::kPinned)).transpose();

    Eigen::MatrixX3d rhs = Eigen::MatrixX3d::Zero(n, 3);
    const auto& faces = m.tgtRest.faces();
    for (size_t fi = 0; fi < faces.size(); ++fi) {
        const Face& f = faces[fi];
        const Mat3 Q = triangle_deformation_gradient(S0.row(f[0]).transpose(), S0.row(f[1]).transpose(), S0.row(f[2]).transpose(),
                                                     S1.row(f[0]).transpose(), S1.row(f[1]).transpose(), S1.row(f[2]).transpose());
        const double w = m.faceWeight[fi];
        for (int c = 0; c < 3; ++c) {
            const int i = f[static_cast<size_t>(c)];
            const int j = f[static_cast<size_t>((c + 1) % 3)];
            const Eigen::RowVector3d target = (Q * (T0.row(j) - T0.row(i)).transpose()).transpose();
            rhs.row(j) += w * target;
            rhs.row(i) -= w * target;
        }
    }
    Eigen::MatrixX3d rhsReduced(n - 1, 3);
    for (int i = 0; i < n; ++i) {
        if (i != Impl::kPinned) rhsReduced.row(Impl::reduced(i)) = rhs.row(i);
    }
    rhsReduced -= m.pinnedColumn * pinPos.transpose();

    Eigen::MatrixX3d x = m.solver.solve(rhsReduced);
    if (!x.allFinite()) throw DegenerateError("deformation_transfer: solve failed");
    x += m.solver.solve(rhsReduced - m.system * x);
    Eigen::MatrixX3d out(n, 3);
    for (int i = 0; i < n; ++i) {
        out.row(i) = i == Impl::kPinned ? Eigen::RowVector3d(pinPos.transpose()) : Eigen::RowVector3d(x.row(Impl::reduced(i)));
    }
    return m.tgtRest.with_vertices(std::move(out));
}

TriMesh deformation_transfer(const TriMesh& srcRest, const TriMesh& srcDeformed, const TriMesh& tgtRest)
{
    if (!srcRest.same_topology(srcDeformed)) throw InvalidInput("deformation_transfer: meshes do not share topology");
    return DeformationTransfer(srcRest, tgtRest).transfer(srcDeformed);
}

} // namespace carimirror
