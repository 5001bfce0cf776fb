// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#include <carimirror/error.hpp>
#include <carimirror/statics/lighting.hpp>

#include <cmath>
#include <numbers>

namespace carimirror {

void SHLighting::validate() const
{
    for (double g : gamma) {
        if (!std::isfinite(g)) throw InvalidInput("SH lighting coefficient is not finite");
    }
}

namespace {

double factorial(int n)
{
    double f = 1.0;
    for (int k = 2; k <= n; ++k) f *= k;
    return f;
}

// Associated Legendre P_l^m(x) for l <= 2 without the Condon-Shortley phase.
double legendre(int l, int m, double x)
{
    const double s = std::sqrt(std::max(0.0, 1.0 - x * x));
    if (l == 0) return 1.0;
    if (l == 1) return m == 0 ? x : s;
    if (m == 0) return 0.5 * (3.0 * x * x - 1.0);
    if (m == 1) return 3.0 * x * s;
    return 3.0 * s * s;
}

} // namespace

std::array<double, 9> sh_basis(const Vec3& n)
{
    if (!n.allFinite() || std::abs(n.norm() - 1.0) > 1e-6) throw InvalidInput("sh_basis: normal must be unit length");
    const double theta = std::acos(std::clamp(n.z(), -1.0, 1.0));
    const double phi = std::atan2(n.y(), n.x());
    const double ct = std::cos(theta);
    std::array<double, 9> out{};
    int k = 0;
    for (int l = 0; l <= 2; ++l) {
        for (int m = -l; m <= l; ++m) {
            const int am = std::abs(m);
            const double K = std::sqrt((2.0 * l + 1.0) / (4.0 * std::numbers::pi) * factorial(l - am) / factorial(l + am));
            const double P = legendre(l, am, ct);
            if (m == 0) {
                out[static_cast<size_t>(k)] = K * P;
            } else if (m > 0) {
                out[static_cast<size_t>(k)] = std::numbers::sqrt2 * K * std::cos(am * phi) * P;
            } else {
                out[static_cast<size_t>(k)] = std::numbers::sqrt2 * K * std::sin(am * phi) * P;
            }
            ++k;
        }
    }
    return out;
}

double sh_irradiance(const Vec3& normal, double albedo, const SHLighting& lighting)
{
    const auto phi = sh_basis(normal);
    double s = 0.0;
    for (size_t j = 0; j < 9; ++j) s += lighting.gamma[j] * phi[j];
    return albedo * s;
}

} // namespace carimirror
