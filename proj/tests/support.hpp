// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

// Shared fixtures for the unit and acceptance suites.

#pragma once

#include <carimirror/mesh.hpp>

#include <Eigen/Geometry>

#include <cmath>
#include <map>
#include <random>

namespace carimirror::testing {

/// Regular planar grid in the z = 0 plane, split along one diagonal.
inline TriMesh planar_grid(int cols, int rows, double spacing = 1.0)
{
    Eigen::MatrixX3d v(cols * rows, 3);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) v.row(r * cols + c) << c * spacing, r * spacing, 0.0;
    }
    std::vector<Face> faces;
    for (int r = 0; r + 1 < rows; ++r) {
        for (int c = 0; c + 1 < cols; ++c) {
            const int i = r * cols + c;
            faces.push_back({i, i + 1, i + cols + 1});
            faces.push_back({i, i + cols + 1, i + cols});
        }
    }
    return TriMesh(v, faces);
}

/// Unit icosphere after `levels` rounds of 4:1 subdivision.
inline TriMesh icosphere(int levels)
{
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                           {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (auto& p : v) p.normalize();
    std::vector<Face> f = {{0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                           {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
                           {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
    for (int l = 0; l < levels; ++l) {
        std::map<std::pair<int, int>, int> mid;
        auto midpoint = [&](int a, int b) {
            const auto key = std::make_pair(std::min(a, b), std::max(a, b));
            auto it = mid.find(key);
            if (it != mid.end()) return it->second;
            v.push_back((v[static_cast<size_t>(a)] + v[static_cast<size_t>(b)]).normalized());
            const int idx = static_cast<int>(v.size()) - 1;
            mid[key] = idx;
            return idx;
        };
        std::vector<Face> next;
        for (const Face& face : f) {
            const int a = midpoint(face[0], face[1]);
            const int b = midpoint(face[1], face[2]);
            const int c = midpoint(face[2], face[0]);
            next.push_back({face[0], a, c});
            next.push_back({face[1], b, a});
            next.push_back({face[2], c, b});
            next.push_back({a, b, c});
        }
        f = std::move(next);
    }
    Eigen::MatrixX3d m(static_cast<Eigen::Index>(v.size()), 3);
    for (size_t i = 0; i < v.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
    return TriMesh(m, f);
}

inline Vec3 random_unit(std::mt19937_64& rng)
{
    std::normal_distribution<double> nd;
    return Vec3(nd(rng), nd(rng), nd(rng)).normalized();
}

inline Mat3 random_rotation(std::mt19937_64& rng)
{
    std::normal_distribution<double> nd;
    Eigen::Quaterniond q(nd(rng), nd(rng), nd(rng), nd(rng));
    return q.normalized().toRotationMatrix();
}

inline Eigen::MatrixX3d transform_rows(const Eigen::MatrixX3d& v, const Mat3& R, const Vec3& t = Vec3::Zero(), double s = 1.0)
{
    Eigen::MatrixX3d out = (s * (v * R.transpose())).rowwise() + t.transpose();
    return out;
}

inline double max_row_distance(const Eigen::MatrixX3d& a, const Eigen::MatrixX3d& b)
{
    return (a - b).rowwise().norm().maxCoeff();
}

} // namespace carimirror::testing
