// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#include <carimirror/error.hpp>
#include <carimirror/pipeline/scene.hpp>
#include <carimirror/raster.hpp>

namespace carimirror {

Intrinsics default_intrinsics(int width, int height)
{
    const double f = 1.5 * width;
    return {f, f, 0.5 * (width - 1), 0.5 * (height - 1)};
}

double default_face_distance(const Intrinsics& K, int width)
{
    return K.fx * SyntheticFaceModel::kFaceWidth / (0.6 * width);
}

SHLighting ambient_lighting(double level)
{
    SHLighting l;
    l.gamma[0] = level / sh_basis(Vec3::UnitZ())[0];
    return l;
}

SHLighting soft_key_lighting(double level)
{
    // 70% ambient, 30% from +z (basis 2 is proportional to z).
    const auto phi = sh_basis(Vec3::UnitZ());
    SHLighting l;
    l.gamma[0] = 0.7 * level / phi[0];
    l.gamma[2] = 0.3 * level / phi[2];
    return l;
}

Image render_view(const TriMesh& mesh, const Eigen::MatrixX2d& uv, const CameraModel& camera, int width, int height,
                  const SHLighting& lighting, const AlbedoFn& albedo, int channels, double background)
{
    if (uv.rows() != mesh.vertex_count()) throw InvalidInput("render_view: one uv per vertex required");
    if (channels != 1 && channels != 3) throw InvalidInput("render_view: channels must be 1 or 3");
    const Eigen::MatrixX3d N = vertex_normals_matrix(mesh);
    return render(mesh.vertices(), mesh.faces(), camera.intrinsics, camera.pose, width, height, channels,
                  [&](int f, const Vec3& b) {
                      const Face& face = mesh.faces()[static_cast<size_t>(f)];
                      Vec2 t = Vec2::Zero();
                      Vec3 n = Vec3::Zero();
                      for (int k = 0; k < 3; ++k) {
                          t += b[k] * uv.row(face[static_cast<size_t>(k)]).transpose();
                          n += b[k] * N.row(face[static_cast<size_t>(k)]).transpose();
                      }
                      const double shade = sh_irradiance(n.normalized(), 1.0, lighting);
                      const Vec3 a = albedo(t.x(), t.y());
                      Eigen::VectorXd c(channels);
                      if (channels == 1) {
                          c[0] = shade * a.mean();
                      } else {
                          c = shade * a;
                      }
                      return c;
                  },
                  background);
}

std::vector<Vec2> project_landmarks(const TriMesh& mesh, const LandmarkSet& landmarks, const CameraModel& camera)
{
    std::vector<Vec2> out;
    out.reserve(landmarks.indices.size());
    for (int id : landmarks.indices) out.push_back(project(camera.intrinsics, camera.pose.apply(mesh.vertex(id))));
    return out;
}

std::vector<double> default_rig_yaws()
{
    return {-30.0, -15.0, 0.0, 15.0, 30.0};
}

MultiViewCapture render_capture(const TriMesh& mesh, const Eigen::MatrixX2d& uv, const LandmarkSet& landmarks,
                                const std::vector<CameraModel>& cameras, int width, int height,
                                const SHLighting& lighting, const AlbedoFn& albedo)
{
    MultiViewCapture cap;
    for (const auto& cam : cameras) {
        cap.views.push_back({render_view(mesh, uv, cam, width, height, lighting, albedo), project_landmarks(mesh, landmarks, cam)});
    }
    return cap;
}

} // namespace carimirror
