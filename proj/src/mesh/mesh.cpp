// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#include <carimirror/error.hpp>
#include <carimirror/mesh.hpp>

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace carimirror {

std::string topology_id(const std::vector<Face>& faces, int vertexCount)
{
    // FNV-1a over little-endian uint32 indices, seeded with the vertex count.
    std::uint64_t h = 14695981039346656037ull;
    auto mix = [&h](std::uint32_t value) {
        for (int b = 0; b < 4; ++b) {
            h ^= (value >> (8 * b)) & 0xffu;
            h *= 1099511628211ull;
        }
    };
    mix(static_cast<std::uint32_t>(vertexCount));
    for (const Face& f : faces) {
        for (int idx : f) mix(static_cast<std::uint32_t>(idx));
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

TriMesh::TriMesh(Eigen::MatrixX3d vertices, std::vector<Face> faces)
    : m_vertices(std::move(vertices))
    , m_faces(std::move(faces))
{
    const int n = static_cast<int>(m_vertices.rows());
    for (const Face& f : m_faces) {
        for (int idx : f) {
            if (idx < 0 || idx >= n) {
                throw InvalidInput("face index " + std::to_string(idx) + " out of range [0," + std::to_string(n) + ")");
            }
        }
    }
    if (!m_vertices.allFinite()) throw InvalidInput("mesh contains non-finite coordinates");
    m_topologyId = topology_id(m_faces, n);
}

TriMesh TriMesh::with_vertices(Eigen::MatrixX3d vertices) const
{
    if (vertices.rows() != m_vertices.rows()) {
        throw InvalidInput("vertex count mismatch: " + std::to_string(vertices.rows()) + " vs " + std::to_string(m_vertices.rows()));
    }
    if (!vertices.allFinite()) throw InvalidInput("mesh contains non-finite coordinates");
    TriMesh out;
    out.m_vertices = std::move(vertices);
    out.m_faces = m_faces;
    out.m_topologyId = m_topologyId;
    return out;
}

double TriMesh::bbox_diagonal() const
{
    if (m_vertices.rows() == 0) return 0.0;
    return (m_vertices.colwise().maxCoeff() - m_vertices.colwise().minCoeff()).norm();
}

void LandmarkSet::validate(int vertexCount) const
{
    std::vector<int> sorted = indices;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw InvalidInput("landmark indices are not distinct");
    }
    for (int idx : indices) {
        if (idx < 0 || idx >= vertexCount) throw InvalidInput("landmark index " + std::to_string(idx) + " out of range");
    }
    for (const auto& poly : polygons) {
        if (poly.size() < 3) throw InvalidInput("landmark polygon needs at least 3 vertices");
        for (int p : poly) {
            if (p < 0 || p >= static_cast<int>(indices.size())) {
                throw InvalidInput("polygon entry " + std::to_string(p) + " does not address a landmark");
            }
        }
    }
}

BlendshapeRig::BlendshapeRig(std::vector<TriMesh> shapes)
    : m_shapes(std::move(shapes))
{
    if (m_shapes.empty()) throw InvalidInput("blendshape rig needs at least the neutral shape");
    const TriMesh& b0 = m_shapes.front();
    const int V = b0.vertex_count();
    m_basis.resize(3 * V, expression_count());
    for (size_t k = 1; k < m_shapes.size(); ++k) {
        if (!m_shapes[k].same_topology(b0)) throw InvalidInput("blendshape " + std::to_string(k) + " topology differs from neutral");
        const Eigen::MatrixX3d d = m_shapes[k].vertices() - b0.vertices();
        for (int i = 0; i < V; ++i) m_basis.block<3, 1>(3 * i, static_cast<Eigen::Index>(k) - 1) = d.row(i).transpose();
    }
}

Eigen::MatrixX3d BlendshapeRig::delta(int k) const
{
    if (k < 0 || k >= expression_count()) throw InvalidInput("blendshape delta index out of range");
    Eigen::MatrixX3d d(vertex_count(), 3);
    for (int i = 0; i < vertex_count(); ++i) d.row(i) = m_basis.block<3, 1>(3 * i, k).transpose();
    return d;
}

Eigen::MatrixX3d BlendshapeRig::evaluate(const Eigen::VectorXd& weights) const
{
    if (weights.size() != expression_count()) throw InvalidInput("weight vector size mismatch");
    const Eigen::VectorXd offsets = m_basis * weights;
    using RowMajorX3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
    return neutral().vertices() + Eigen::Map<const RowMajorX3>(offsets.data(), vertex_count(), 3);
}

Vec3 BlendshapeRig::evaluate_vertex(int vertex, const Eigen::VectorXd& weights) const
{
    return neutral().vertex(vertex) + vertex_basis(vertex) * weights;
}

Vec3 face_normal_raw(const Eigen::MatrixX3d& v, const Face& f)
{
    const Vec3 a = v.row(f[0]).transpose();
    const Vec3 b = v.row(f[1]).transpose();
    const Vec3 c = v.row(f[2]).transpose();
    return (b - a).cross(c - a);
}

Eigen::MatrixX3d vertex_normals_matrix(const TriMesh& mesh)
{
    const auto& v = mesh.vertices();
    const int n = mesh.vertex_count();
    Eigen::MatrixX3d acc = Eigen::MatrixX3d::Zero(n, 3);
    // Fallback: any nondegenerate incident face normal, used when the weighted sum cancels.
    Eigen::MatrixX3d fallback = Eigen::MatrixX3d::Zero(n, 3);
    std::vector<char> hasFallback(static_cast<size_t>(n), 0);
    bool anyFace = false;
    double maxArea = 0.0;
    for (const Face& f : mesh.faces()) maxArea = std::max(maxArea, face_normal_raw(v, f).norm());
    const double eps = 1e-14 * std::max(maxArea, 1e-300);

    for (const Face& f : mesh.faces()) {
        const Vec3 raw = face_normal_raw(v, f); // length = 2 * area, so summing weights by area
        const double len = raw.norm();
        if (!(len > eps)) continue;
        anyFace = true;
        for (int idx : f) {
            acc.row(idx) += raw.transpose();
            if (!hasFallback[static_cast<size_t>(idx)]) {
                fallback.row(idx) = raw.transpose() / len;
                hasFallback[static_cast<size_t>(idx)] = 1;
            }
        }
    }
    if (!anyFace) throw DegenerateError("vertex_normals: every face is degenerate");

    for (int i = 0; i < n; ++i) {
        const double len = acc.row(i).norm();
        if (len > eps) {
            acc.row(i) /= len;
        } else if (hasFallback[static_cast<size_t>(i)]) {
            acc.row(i) = fallback.row(i);
        } else {
            // Isolated or fully degenerate neighbourhood: fall back to the mean normal.
            Vec3 mean = Vec3::Zero();
            for (const Face& f : mesh.faces()) {
                const Vec3 raw = face_normal_raw(v, f);
                if (raw.norm() > eps) mean += raw;
            }
            acc.row(i) = mean.normalized().transpose();
        }
    }
    return acc;
}

std::vector<Vec3> vertex_normals(const TriMesh& mesh)
{
    const Eigen::MatrixX3d m = vertex_normals_matrix(mesh);
    std::vector<Vec3> out(static_cast<size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<size_t>(i)] = m.row(i).transpose();
    return out;
}

SparseMatrix cotangent_laplacian(const TriMesh& mesh)
{
    const auto& v = mesh.vertices();
    const int n = mesh.vertex_count();
    // Accumulate per-edge half weights, then clamp the full edge weight.
    std::vector<Eigen::Triplet<double>> halfWeights;
    halfWeights.reserve(mesh.faces().size() * 3);
    for (const Face& f : mesh.faces()) {
        for (int c = 0; c < 3; ++c) {
            const int i = f[static_cast<size_t>((c + 1) % 3)];
            const int j = f[static_cast<size_t>((c + 2) % 3)];
            const Vec3 a = v.row(i).transpose() - v.row(f[static_cast<size_t>(c)]).transpose();
            const Vec3 b = v.row(j).transpose() - v.row(f[static_cast<size_t>(c)]).transpose();
            const double crossLen = a.cross(b).norm();
            double cot = crossLen > 0.0 ? a.dot(b) / crossLen : kCotangentMax;
            if (!std::isfinite(cot)) cot = kCotangentMax;
            halfWeights.emplace_back(std::min(i, j), std::max(i, j), 0.5 * cot);
        }
    }
    SparseMatrix upper(n, n);
    upper.setFromTriplets(halfWeights.begin(), halfWeights.end());

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<size_t>(upper.nonZeros()) * 4);
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
    for (int k = 0; k < upper.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it(upper, k); it; ++it) {
            const double w = std::clamp(it.value(), kCotangentMin, kCotangentMax);
            const auto i = static_cast<int>(it.row());
            const auto j = static_cast<int>(it.col());
            trip.emplace_back(i, j, -w);
            trip.emplace_back(j, i, -w);
            diag[i] += w;
            diag[j] += w;
        }
    }
    for (int i = 0; i < n; ++i) trip.emplace_back(i, i, diag[i]);
    SparseMatrix L(n, n);
    L.setFromTriplets(trip.begin(), trip.end());
    return L;
}

std::vector<std::vector<int>> vertex_adjacency(const std::vector<Face>& faces, int vertexCount)
{
    std::vector<std::vector<int>> adj(static_cast<size_t>(vertexCount));
    for (const Face& f : faces) {
        for (int c = 0; c < 3; ++c) {
            const int i = f[static_cast<size_t>(c)];
            const int j = f[static_cast<size_t>((c + 1) % 3)];
            adj[static_cast<size_t>(i)].push_back(j);
            adj[static_cast<size_t>(j)].push_back(i);
        }
    }
    for (auto& a : adj) {
        std::sort(a.begin(), a.end());
        a.erase(std::unique(a.begin(), a.end()), a.end());
    }
    return adj;
}

std::vector<std::array<int, 2>> mesh_edges(const std::vector<Face>& faces)
{
    std::vector<std::array<int, 2>> edges;
    edges.reserve(faces.size() * 3);
    for (const Face& f : faces) {
        for (int c = 0; c < 3; ++c) {
            const int i = f[static_cast<size_t>(c)];
            const int j = f[static_cast<size_t>((c + 1) % 3)];
            edges.push_back({std::min(i, j), std::max(i, j)});
        }
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    return edges;
}

} // namespace carimirror
