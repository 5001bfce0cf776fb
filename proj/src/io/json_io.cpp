// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#include <carimirror/error.hpp>
#include <carimirror/io/json_io.hpp>

#include <fstream>

namespace carimirror::io {

namespace {

template <typename F>
auto guarded(const char* what, F&& fn)
{
    try {
        return fn();
    } catch (const Json::exception& e) {
        throw FormatError(std::string(what) + ": " + e.what());
    }
}

double finite(const Json& j)
{
    const double v = j.get<double>();
    if (!std::isfinite(v)) throw FormatError("non-finite number in JSON record");
    return v;
}

} // namespace

Json read_json(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_json(const std::filesystem::path& path, const Json& value)
{
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw Error("cannot open " + tmp.string() + " for writing");
        out << value.dump(2) << '\n';
        if (!out) throw Error("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Json to_json(const Intrinsics& K)
{
    return {{"fx", K.fx}, {"fy", K.fy}, {"cx", K.cx}, {"cy", K.cy}};
}

Json to_json(const Pose& pose)
{
    const auto& q = pose.rotation;
    return {{"rotation", {q.w(), q.x(), q.y(), q.z()}},
            {"translation", {pose.translation.x(), pose.translation.y(), pose.translation.z()}}};
}

Json to_json(const CameraModel& camera)
{
    return {{"intrinsics", to_json(camera.intrinsics)}, {"pose", to_json(camera.pose)}};
}

Json to_json(const SHLighting& lighting)
{
    return Json(std::vector<double>(lighting.gamma.begin(), lighting.gamma.end()));
}

Json to_json(const std::vector<Vec2>& points)
{
    Json a = Json::array();
    for (const Vec2& p : points) a.push_back({p.x(), p.y()});
    return a;
}

Json to_json(const Eigen::VectorXd& v)
{
    return Json(std::vector<double>(v.data(), v.data() + v.size()));
}

Json to_json(const LandmarkSet& landmarks)
{
    return {{"indices", landmarks.indices}, {"polygons", landmarks.polygons}};
}

Intrinsics intrinsics_from_json(const Json& j)
{
    return guarded("intrinsics", [&] {
        Intrinsics K;
        K.fx = finite(j.at("fx"));
        K.fy = finite(j.at("fy"));
        K.cx = finite(j.at("cx"));
        K.cy = finite(j.at("cy"));
        return K;
    });
}

Pose pose_from_json(const Json& j)
{
    return guarded("pose", [&] {
        const Json& r = j.at("rotation");
        const Json& t = j.at("translation");
        if (r.size() != 4 || t.size() != 3) throw FormatError("pose: rotation needs 4 and translation 3 entries");
        Pose p;
        p.rotation = Eigen::Quaterniond(finite(r[0]), finite(r[1]), finite(r[2]), finite(r[3]));
        const double norm = p.rotation.norm();
        if (std::abs(norm - 1.0) > 1e-6) throw FormatError("pose: rotation quaternion is not unit length");
        // Leave unit quaternions bit-exact; only clearly rounded input is renormalized.
        if (std::abs(norm - 1.0) > 1e-14) p.rotation.normalize();
        p.translation = Vec3(finite(t[0]), finite(t[1]), finite(t[2]));
        return p;
    });
}

CameraModel camera_from_json(const Json& j)
{
    return guarded("camera", [&] {
        CameraModel c;
        c.intrinsics = intrinsics_from_json(j.at("intrinsics"));
        c.pose = pose_from_json(j.at("pose"));
        c.validate();
        return c;
    });
}

SHLighting lighting_from_json(const Json& j)
{
    return guarded("lighting", [&] {
        if (!j.is_array() || j.size() != 9) throw FormatError("lighting: expected 9 coefficients");
        SHLighting l;
        for (size_t i = 0; i < 9; ++i) l.gamma[i] = finite(j[i]);
        return l;
    });
}

std::vector<Vec2> points_from_json(const Json& j)
{
    return guarded("points", [&] {
        std::vector<Vec2> pts;
        for (const Json& p : j) {
            if (p.size() != 2) throw FormatError("points: each entry needs two coordinates");
            pts.emplace_back(finite(p[0]), finite(p[1]));
        }
        return pts;
    });
}

Eigen::VectorXd vector_from_json(const Json& j)
{
    return guarded("vector", [&] {
        Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
        for (size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = finite(j[i]);
        return v;
    });
}

LandmarkSet landmarks_from_json(const Json& j)
{
    return guarded("landmark set", [&] {
        LandmarkSet s;
        s.indices = j.at("indices").get<std::vector<int>>();
        s.polygons = j.at("polygons").get<std::vector<std::vector<int>>>();
        return s;
    });
}

std::vector<Vec2> read_landmarks(const std::filesystem::path& path)
{
    const Json j = read_json(path);
    try {
        return points_from_json(j.at("landmarks"));
    } catch (const Error& e) {
        throw FormatError(path.string() + ": " + e.what());
    } catch (const Json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_landmarks(const std::filesystem::path& path, const std::vector<Vec2>& points)
{
    write_json(path, Json{{"landmarks", to_json(points)}});
}

} // namespace carimirror::io
