// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#include <carimirror/error.hpp>
#include <carimirror/io/obj.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace carimirror::io {

namespace {

/// Parses "7", "7/3", "7//2", "7/3/2" and returns (v, vt) zero-based; vt = -1 when absent.
std::pair<int, int> parse_corner(const std::string& token, int nv, int nvt)
{
    int v = 0;
    int vt = 0;
    const auto slash = token.find('/');
    try {
        v = std::stoi(token.substr(0, slash));
        if (slash != std::string::npos) {
            const auto rest = token.substr(slash + 1);
            if (!rest.empty() && rest[0] != '/') vt = std::stoi(rest.substr(0, rest.find('/')));
        }
    } catch (const std::exception&) {
        throw FormatError("bad OBJ face token '" + token + "'");
    }
    v = v < 0 ? nv + v : v - 1;
    vt = vt == 0 ? -1 : (vt < 0 ? nvt + vt : vt - 1);
    return {v, vt};
}

std::ofstream open_out(const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
    return out;
}

std::string fmt(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", x);
    return buf;
}

} // namespace

ObjData read_obj(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open OBJ '" + path.string() + "'");
    std::vector<Vec3> v;
    std::vector<Vec2> vt;
    std::vector<Face> faces;
    std::vector<std::array<int, 3>> faceVt;
    std::string line;
    int lineNo = 0;
    while (std::getline(in, line)) {
        ++lineNo;
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "v") {
            Vec3 p;
            if (!(ss >> p.x() >> p.y() >> p.z())) throw FormatError(path.string() + ":" + std::to_string(lineNo) + ": bad vertex");
            v.push_back(p);
        } else if (tag == "vt") {
            Vec2 t;
            if (!(ss >> t.x() >> t.y())) throw FormatError(path.string() + ":" + std::to_string(lineNo) + ": bad texcoord");
            vt.push_back(t);
        } else if (tag == "f") {
            std::vector<std::pair<int, int>> corners;
            std::string tok;
            while (ss >> tok) corners.push_back(parse_corner(tok, static_cast<int>(v.size()), static_cast<int>(vt.size())));
            if (corners.size() < 3) throw FormatError(path.string() + ":" + std::to_string(lineNo) + ": face with < 3 corners");
            for (size_t k = 1; k + 1 < corners.size(); ++k) {
                faces.push_back({corners[0].first, corners[k].first, corners[k + 1].first});
                faceVt.push_back({corners[0].second, corners[k].second, corners[k + 1].second});
            }
        }
    }
    Eigen::MatrixX3d verts(static_cast<Eigen::Index>(v.size()), 3);
    for (size_t i = 0; i < v.size(); ++i) verts.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
    ObjData data{TriMesh(std::move(verts), faces), std::nullopt};

    if (!vt.empty()) {
        Eigen::MatrixX2d uv = Eigen::MatrixX2d::Constant(static_cast<Eigen::Index>(v.size()), 2, -1.0);
        bool consistent = true;
        for (size_t f = 0; f < faces.size() && consistent; ++f) {
            for (int c = 0; c < 3; ++c) {
                const int vi = faces[f][static_cast<size_t>(c)];
                const int ti = faceVt[f][static_cast<size_t>(c)];
                if (ti < 0 || ti >= static_cast<int>(vt.size())) {
                    consistent = false;
                    break;
                }
                if (uv(vi, 0) >= 0.0 && (uv.row(vi).transpose() - vt[static_cast<size_t>(ti)]).norm() > 1e-12) {
                    consistent = false;
                    break;
                }
                uv.row(vi) = vt[static_cast<size_t>(ti)].transpose();
            }
        }
        if (consistent) data.uv = uv;
    }
    return data;
}

void write_obj(const std::filesystem::path& path, const TriMesh& mesh, const Eigen::MatrixX2d* uv)
{
    auto out = open_out(path);
    const auto& v = mesh.vertices();
    for (Eigen::Index i = 0; i < v.rows(); ++i) out << "v " << fmt(v(i, 0)) << ' ' << fmt(v(i, 1)) << ' ' << fmt(v(i, 2)) << '\n';
    if (uv) {
        for (Eigen::Index i = 0; i < uv->rows(); ++i) out << "vt " << fmt((*uv)(i, 0)) << ' ' << fmt((*uv)(i, 1)) << '\n';
    }
    for (const Face& f : mesh.faces()) {
        out << 'f';
        for (int idx : f) {
            out << ' ' << idx + 1;
            if (uv) out << '/' << idx + 1;
        }
        out << '\n';
    }
    if (!out) throw FormatError("failed writing '" + path.string() + "'");
}

void write_ply(const std::filesystem::path& path, const Eigen::MatrixX3d& points)
{
    auto out = open_out(path);
    out << "ply\nformat ascii 1.0\nelement vertex " << points.rows() << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
    for (Eigen::Index i = 0; i < points.rows(); ++i) out << fmt(points(i, 0)) << ' ' << fmt(points(i, 1)) << ' ' << fmt(points(i, 2)) << '\n';
}

Eigen::MatrixX3d read_ply(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open PLY '" + path.string() + "'");
    std::string line;
    long count = -1;
    while (std::getline(in, line)) {
        if (line.rfind("element vertex", 0) == 0) count = std::stol(line.substr(15));
        if (line == "end_header") break;
    }
    if (count < 0) throw FormatError("PLY without vertex element");
    Eigen::MatrixX3d pts(count, 3);
    for (long i = 0; i < count; ++i) {
        if (!(in >> pts(i, 0) >> pts(i, 1) >> pts(i, 2))) throw FormatError("truncated PLY body");
    }
    return pts;
}

} // namespace carimirror::io
