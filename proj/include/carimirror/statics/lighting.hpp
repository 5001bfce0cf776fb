// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <carimirror/mesh.hpp>

#include <array>

namespace carimirror {

/// Second-order spherical-harmonic lighting coefficients.
struct SHLighting
{
    std::array<double, 9> gamma{};

    void validate() const;
};

/// Real SH basis (bands 0..2) at a unit direction, ordered
/// (0,0) (1,-1) (1,0) (1,1) (2,-2) (2,-1) (2,0) (2,1) (2,2).
/// Throws InvalidInput if the normal is not unit length within 1e-6.
std::array<double, 9> sh_basis(const Vec3& normal);

/// albedo * sum_j gamma_j phi_j(normal).
double sh_irradiance(const Vec3& normal, double albedo, const SHLighting& lighting);

} // namespace carimirror
