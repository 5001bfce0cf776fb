// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace carimirror {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Face = std::array<int, 3>;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Hash of a face list; two meshes with the same id share connectivity.
std::string topology_id(const std::vector<Face>& faces, int vertexCount);

/// Fixed-topology triangle mesh. Vertices are stored as a V x 3 matrix.
class TriMesh
{
public:
    TriMesh() = default;
    TriMesh(Eigen::MatrixX3d vertices, std::vector<Face> faces);

    /// Same connectivity, new positions. Throws if the row count differs.
    TriMesh with_vertices(Eigen::MatrixX3d vertices) const;

    const Eigen::MatrixX3d& vertices() const { return m_vertices; }
    const std::vector<Face>& faces() const { return m_faces; }
    const std::string& topology() const { return m_topologyId; }

    int vertex_count() const { return static_cast<int>(m_vertices.rows()); }
    int face_count() const { return static_cast<int>(m_faces.size()); }
    Vec3 vertex(int i) const { return m_vertices.row(i).transpose(); }

    bool same_topology(const TriMesh& other) const { return m_topologyId == other.m_topologyId; }

    /// Length of the bounding-box diagonal.
    double bbox_diagonal() const;

private:
    Eigen::MatrixX3d m_vertices;
    std::vector<Face> m_faces;
    std::string m_topologyId;
};

/// Landmark vertex indices and the polygon loops used by the angle descriptor.
struct LandmarkSet
{
    std::vector<int> indices;
    /// Each loop lists positions into `indices`, not raw vertex ids.
    std::vector<std::vector<int>> polygons;

    void validate(int vertexCount) const;
};

/// Neutral mesh plus expression shapes, all sharing one topology.
class BlendshapeRig
{
public:
    static constexpr int kDefaultShapeCount = 47;

    BlendshapeRig() = default;
    explicit BlendshapeRig(std::vector<TriMesh> shapes);

    const std::vector<TriMesh>& shapes() const { return m_shapes; }
    const TriMesh& neutral() const { return m_shapes.front(); }
    int expression_count() const { return static_cast<int>(m_shapes.size()) - 1; }
    int vertex_count() const { return m_shapes.front().vertex_count(); }

    /// Delta of expression k (1-based shape index k+1) stacked as V x 3.
    Eigen::MatrixX3d delta(int k) const;

    /// b0 + sum_k w_k (b_k - b0).
    Eigen::MatrixX3d evaluate(const Eigen::VectorXd& weights) const;
    /// Position of one vertex for the given weights.
    Vec3 evaluate_vertex(int vertex, const Eigen::VectorXd& weights) const;
    /// 3 x n Jacobian of a vertex position w.r.t. the weights, as a view into the rig.
    auto vertex_basis(int vertex) const { return m_basis.middleRows<3>(3 * vertex); }

private:
    std::vector<TriMesh> m_shapes;
    /// 3V x n, vertex-major rows, so one vertex's basis is contiguous.
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> m_basis;
};

struct DeformConstraint
{
    int vertexIndex = 0;
    Vec3 targetPosition = Vec3::Zero();
    /// Nonnegative; +infinity marks a hard constraint.
    double weight = 1.0;
};

/// Area-weighted unit vertex normals.
std::vector<Vec3> vertex_normals(const TriMesh& mesh);
Eigen::MatrixX3d vertex_normals_matrix(const TriMesh& mesh);

/// Unnormalized face normal (cross product of two edges).
Vec3 face_normal_raw(const Eigen::MatrixX3d& vertices, const Face& f);

/// Symmetric cotangent Laplacian with zero row sums (L = D - W, positive semidefinite).
SparseMatrix cotangent_laplacian(const TriMesh& mesh);

/// Cotangent weight clamp applied to each half-edge weight.
inline constexpr double kCotangentMin = 1e-6;
inline constexpr double kCotangentMax = 1e6;

/// Vertex adjacency lists derived from faces (sorted, unique).
std::vector<std::vector<int>> vertex_adjacency(const std::vector<Face>& faces, int vertexCount);

/// Unique undirected edges (i < j).
std::vector<std::array<int, 2>> mesh_edges(const std::vector<Face>& faces);

} // namespace carimirror
