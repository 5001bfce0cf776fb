// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <carimirror/mesh.hpp>

#include <memory>
#include <span>

namespace carimirror {

/// Minimizes ||L (v - v0)||^2 + sum_c w_c ||v_c - target_c||^2 with the cotangent Laplacian L.
/// Constraints with infinite weight are enforced exactly. Throws DegenerateError when no
/// constraint has positive weight.
TriMesh laplacian_deform(const TriMesh& mesh, std::span<const DeformConstraint> constraints);

/// Laplacian energy ||L (v - v0)||^2 + constraint energy, evaluated for a candidate.
double laplacian_deform_energy(const TriMesh& rest,
                               const SparseMatrix& laplacian,
                               const Eigen::MatrixX3d& candidate,
                               std::span<const DeformConstraint> constraints);

/// Transfers the per-triangle deformation gradients of srcRest -> srcDeformed onto tgtRest.
/// Vertex 0 is pinned to tgtRest[0] + (srcDeformed[0] - srcRest[0]).
TriMesh deformation_transfer(const TriMesh& srcRest, const TriMesh& srcDeformed, const TriMesh& tgtRest);

/// Deformation transfer with the target system factored once, for transferring many
/// source deformations (e.g. a whole blendshape rig) onto one target.
class DeformationTransfer
{
public:
    DeformationTransfer(const TriMesh& srcRest, const TriMesh& tgtRest);
    ~DeformationTransfer();
    DeformationTransfer(DeformationTransfer&&) noexcept;
    DeformationTransfer& operator=(DeformationTransfer&&) noexcept;

    TriMesh transfer(const TriMesh& srcDeformed) const;

private:
    struct Impl;
    std::unique_ptr<Impl> m_impl;
};

/// Per-triangle deformation gradient using the normal-offset fourth vertex; identity when degenerate.
Mat3 triangle_deformation_gradient(const Vec3& a0, const Vec3& b0, const Vec3& c0,
                                   const Vec3& a1, const Vec3& b1, const Vec3& c1);

} // namespace carimirror
