// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <carimirror/mesh.hpp>

#include <cstdint>
#include <random>

namespace carimirror {

enum class FaceStyle { Regular, Exaggerated };

/// Grid resolution of the synthetic face chart. 113 x 105 gives the 11865-vertex reference scale.
struct FaceGrid
{
    int cols = 24;
    int rows = 24;
};

/// Procedural face family used as the test corpus and as the coarse parametric basis.
///
/// Vertices form a regular (u, v) chart; the regular style is linear in both parameter
/// vectors, the exaggerated style applies a fixed invertible warp on top of it.
class SyntheticFaceModel
{
public:
    static constexpr int kIdentityDims = 10;
    static constexpr int kExpressionDims = 8;
    static constexpr int kLandmarkCount = 68;
    static constexpr double kFaceWidth = 140.0;
    static constexpr double kFaceHeight = 180.0;

    explicit SyntheticFaceModel(FaceGrid grid = {});

    const FaceGrid& grid() const { return m_grid; }
    const TriMesh& template_mesh() const { return m_template; }
    /// Chart coordinates in [0,1]^2, one row per vertex.
    const Eigen::MatrixX2d& uv() const { return m_uv; }
    const LandmarkSet& landmarks() const { return m_landmarks; }
    /// 3V x 10, vertex-major (x0 y0 z0 x1 ...).
    const Eigen::MatrixXd& identity_basis() const { return m_identityBasis; }
    /// 3V x 8, vertex-major.
    const Eigen::MatrixXd& expression_basis() const { return m_expressionBasis; }

    TriMesh synthesize(const Eigen::VectorXd& identity,
                       const Eigen::VectorXd& expression,
                       FaceStyle style = FaceStyle::Regular,
                       std::uint64_t seed = 0) const;

    /// Exaggeration warp applied to regular-style vertices.
    Eigen::MatrixX3d exaggerate(const Eigen::MatrixX3d& regular, std::uint64_t seed = 0) const;

    /// Template neutral plus 46 localized expression shapes (zero on the chart border).
    BlendshapeRig template_rig() const;

    /// Draws identity / expression parameters from the family's prior.
    Eigen::VectorXd sample_identity(std::mt19937_64& rng, double scale = 1.0) const;
    Eigen::VectorXd sample_expression(std::mt19937_64& rng, double scale = 1.0) const;

    int vertex_index(int col, int row) const { return row * m_grid.cols + col; }

private:
    FaceGrid m_grid;
    TriMesh m_template;
    TriMesh m_exaggeratedTemplate;
    Eigen::MatrixX2d m_uv;
    LandmarkSet m_landmarks;
    Eigen::MatrixXd m_identityBasis;
    Eigen::MatrixXd m_expressionBasis;
};

/// Convenience wrapper around the default-resolution model.
TriMesh synthesize_face(const Eigen::VectorXd& identityParams,
                        const Eigen::VectorXd& expressionParams,
                        FaceStyle style,
                        std::uint64_t seed);

/// Default-resolution model shared by the convenience helpers.
const SyntheticFaceModel& default_face_model();

/// Procedural linear-RGB albedo of the synthetic face chart, values in [0,1].
Vec3 synthetic_albedo(double u, double v);

} // namespace carimirror
