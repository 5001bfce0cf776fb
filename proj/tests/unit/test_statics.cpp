// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "oracles/statics.hpp"
#include "support.hpp"

#include <carimirror/error.hpp>
#include <carimirror/pipeline/scene.hpp>
#include <carimirror/statics/bundle.hpp>
#include <carimirror/statics/displacement.hpp>
#include <carimirror/statics/fit.hpp>
#include <carimirror/statics/lighting.hpp>
#include <carimirror/statics/rig.hpp>

#include <numbers>

using namespace carimirror;
using namespace carimirror::testing;

namespace {

AlbedoFn albedo_fn()
{
    return [](double u, double v) { return synthetic_albedo(u, v); };
}

// Torus in colour space: the chart-to-RGB map has gradients bounded away from zero in both
// directions, so a single-point colour residual constrains both displacement components.
AlbedoFn structured_albedo()
{
    return [](double u, double v) {
        const double tau = 2.0 * std::numbers::pi;
        const double theta = tau * 4.0 * u;
        const double phi = tau * 5.0 * v;
        const double radius = 0.2 + 0.1 * std::cos(phi);
        return Vec3(0.5 + radius * std::cos(theta), 0.5 + radius * std::sin(theta), 0.5 + 0.1 * std::sin(phi));
    };
}

} // namespace

TEST_CASE("SH basis matches the closed-form table")
{
    std::mt19937_64 rng(1);
    for (int k = 0; k < 20; ++k) {
        const Vec3 n = random_unit(rng);
        const auto got = sh_basis(n);
        const auto want = sh_table(n);
        for (size_t j = 0; j < 9; ++j) CHECK(std::abs(got[j] - want[j]) < 1e-12);
    }
}

TEST_CASE("sh_irradiance constant band, albedo scaling and linearity")
{
    SHLighting l;
    l.gamma[0] = 2.5;
    std::mt19937_64 rng(2);
    const double phi0 = 1.0 / (2.0 * std::sqrt(std::numbers::pi));
    for (int k = 0; k < 10; ++k) {
        const Vec3 n = random_unit(rng);
        CHECK(std::abs(sh_irradiance(n, 1.0, l) - 2.5 * phi0) < 1e-12);
        CHECK(sh_irradiance(n, 1.0, l) == doctest::Approx(2.5 * 0.2820948).epsilon(1e-6));
    }
    std::normal_distribution<double> nd;
    for (int k = 0; k < 10; ++k) {
        SHLighting a;
        SHLighting b;
        SHLighting ab;
        for (size_t j = 0; j < 9; ++j) {
            a.gamma[j] = nd(rng);
            b.gamma[j] = nd(rng);
            ab.gamma[j] = a.gamma[j] + b.gamma[j];
        }
        const Vec3 n = random_unit(rng);
        CHECK(sh_irradiance(n, 0.0, a) == 0.0);
        CHECK(std::abs(sh_irradiance(n, 0.7, ab) - sh_irradiance(n, 0.7, a) - sh_irradiance(n, 0.7, b)) < 1e-12);
    }
    CHECK_THROWS_AS(sh_irradiance(Vec3(0, 0, 2), 1.0, l), InvalidInput);
}

TEST_CASE("coarse fit recovers landmarks from noiseless renders with monotone energy")
{
    const Rig rig = synthetic_rig(7);
    const auto& model = default_face_model();
    const MultiViewCapture cap = render_capture(rig.mesh, model.uv(), model.landmarks(), rig.cameras, 256, 256,
                                                soft_key_lighting(), albedo_fn());
    FitOptions opts;
    opts.intrinsics = rig.cameras.front().intrinsics;
    const FitResult fit = fit_parametric_model(cap, ParametricBasis::from_synthetic(model), opts);
    MESSAGE("landmark RMSE " << fit.landmarkRmse << " px, energy " << fit.energy.front() << " -> " << fit.energy.back());
    CHECK(fit.landmarkRmse < 0.5);
    for (size_t k = 1; k < fit.energy.size(); ++k) CHECK(fit.energy[k] <= fit.energy[k - 1] + 1e-9 * std::abs(fit.energy[k - 1]));
    CHECK(fit.cameras.size() == 5);
    CHECK(fit.albedo.vertex.minCoeff() >= 0.0);
    CHECK(fit.albedo.vertex.maxCoeff() <= 1.0);

    FitOptions heavy = opts;
    heavy.regularization = 1e12;
    heavy.outerIterations = 3;
    const FitResult flat = fit_parametric_model(cap, ParametricBasis::from_synthetic(model), heavy);
    CHECK(flat.identity.cwiseAbs().maxCoeff() < 1e-4);
    CHECK(flat.expression.cwiseAbs().maxCoeff() < 1e-4);

    MultiViewCapture bad = cap;
    bad.views[1].landmarks.pop_back();
    CHECK_THROWS_AS(fit_parametric_model(bad, ParametricBasis::from_synthetic(model), opts), InvalidInput);
}

TEST_CASE("displacement field is near zero on photo-consistent views")
{
    const Rig rig = synthetic_rig(3);
    const auto& model = default_face_model();
    const MultiViewCapture cap = render_capture(rig.mesh, model.uv(), model.landmarks(), rig.cameras, 256, 256, ambient_lighting(), albedo_fn());
    const DisplacementField f = optimize_displacement(cap, rig.mesh, rig.cameras);
    double worst = 0.0;
    int refined = 0;
    for (int i = 0; i < f.vertexCount; ++i) {
        refined += f.refined[static_cast<size_t>(i)];
        for (int j = 0; j < f.viewCount; ++j) worst = std::max(worst, f.delta[f.at(i, j)].norm());
    }
    MESSAGE("max |du| = " << worst << " over " << refined << " refined vertices");
    CHECK(refined > f.vertexCount / 2);
    CHECK(worst < 0.05);
}

TEST_CASE("displacement field recovers a 2 px image shift")
{
    const Rig rig = synthetic_rig(3);
    const auto& model = default_face_model();
    MultiViewCapture cap = render_capture(rig.mesh, model.uv(), model.landmarks(), rig.cameras, 256, 256, ambient_lighting(), structured_albedo());
    // Shift view 3 right by exactly two pixels.
    const Image src = cap.views[3].image;
    Image& dst = cap.views[3].image;
    for (int y = 0; y < src.height(); ++y) {
        for (int x = 0; x < src.width(); ++x) {
            for (int c = 0; c < 3; ++c) dst.at(x, y, c) = x >= 2 ? src.at(x - 2, y, c) : 0.0;
        }
    }
    DisplacementOptions opts;
    // Intensities live in [0,1], so the default weight dominates the squared colour gradients.
    opts.lambdaReg = 1e-6;
    const DisplacementField f = optimize_displacement(cap, rig.mesh, rig.cameras, opts);
    // Interior: the vertex and its neighbours sit away from silhouettes and the best view is not view 3.
    const auto adj = vertex_adjacency(rig.mesh.faces(), rig.mesh.vertex_count());
    int checked = 0;
    int within = 0;
    for (int i = 0; i < f.vertexCount; ++i) {
        const int col = i % model.grid().cols;
        const int row = i / model.grid().cols;
        if (col < 3 || row < 3 || col >= model.grid().cols - 3 || row >= model.grid().rows - 3) continue;
        const int best = f.bestView[static_cast<size_t>(i)];
        if (!f.visible[f.at(i, 3)] || best == 3 || !f.refined[static_cast<size_t>(i)]) continue;
        bool ringVisible = true;
        for (int n : adj[static_cast<size_t>(i)]) ringVisible = ringVisible && f.visible[f.at(n, 3)] && f.visible[f.at(n, best)];
        if (!ringVisible) continue;
        ++checked;
        if ((f.delta[f.at(i, 3)] - Vec2(2.0, 0.0)).norm() < 0.2) ++within;
    }
    MESSAGE(within << " / " << checked << " interior vertices within 0.2 px");
    CHECK(checked > 100);
    CHECK(within == checked);
}

TEST_CASE("displacement regularizer limit and in-bounds samples")
{
    const Rig rig = synthetic_rig(5);
    const auto& model = default_face_model();
    MultiViewCapture cap = render_capture(rig.mesh, model.uv(), model.landmarks(), rig.cameras, 256, 256, ambient_lighting(), albedo_fn());
    std::mt19937_64 rng(5);
    std::normal_distribution<double> noise(0.0, 0.05);
    for (auto& v : cap.views) {
        for (double& px : v.image.data()) px += noise(rng);
    }
    DisplacementOptions big;
    big.lambdaReg = 1e8;
    const DisplacementField f = optimize_displacement(cap, rig.mesh, rig.cameras, big);
    double worst = 0.0;
    for (const Vec2& d : f.delta) worst = std::max(worst, d.norm());
    CHECK(worst < 1e-6);

    DisplacementOptions loose;
    loose.lambdaReg = 0.0;
    const DisplacementField g = optimize_displacement(cap, rig.mesh, rig.cameras, loose);
    for (int i = 0; i < g.vertexCount; ++i) {
        for (int j = 0; j < g.viewCount; ++j) {
            if (!g.visible[g.at(i, j)]) continue;
            const Vec2 t = g.target(i, j);
            CHECK((t.x() >= 0.0 && t.y() >= 0.0 && t.x() <= 255.0 && t.y() <= 255.0));
        }
    }
}


TEST_CASE("bundle adjustment converges to zero residual on noiseless data")
{
    const BundleProblem truth = bundle_truth(11);
    std::mt19937_64 rng(4);
    const BundleProblem init = perturbed(truth, rng, 1.0, 0.01, 2.0);
    const BundleResult r = bundle_adjust(init);
    MESSAGE("mean error " << r.initialMeanError << " -> " << r.finalMeanError << " px in " << r.iterations << " iterations");
    CHECK(r.initialMeanError > 1.0);
    CHECK(r.finalMeanError < 1e-6);
    // Pose 0 is the gauge.
    CHECK(r.solution.poses[0].translation == init.poses[0].translation);
}

TEST_CASE("bundle adjustment with half-pixel noise stays within a pixel")
{
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        std::mt19937_64 rng(100 + seed);
        const BundleProblem noisy = with_pixel_noise(bundle_truth(20 + seed), rng, 0.5);
        const BundleResult r = bundle_adjust(perturbed(noisy, rng, 1.0, 0.01, 2.0));
        MESSAGE("seed " << seed << ": mean error " << r.finalMeanError << " px");
        CHECK(r.finalMeanError <= 1.0);
    }
}

TEST_CASE("bundle adjustment keeps an already optimal solution")
{
    const BundleProblem truth = bundle_truth(12);
    const BundleResult r = bundle_adjust(truth);
    for (size_t j = 0; j < truth.poses.size(); ++j) {
        CHECK(rotation_angle_deg(r.solution.poses[j].rotation, truth.poses[j].rotation) < 1e-6);
        CHECK((r.solution.poses[j].translation - truth.poses[j].translation).norm() < 1e-6);
    }
}

TEST_CASE("bundle cost is invariant under a global similarity")
{
    BundleProblem p = bundle_truth(13);
    std::mt19937_64 rng(13);
    std::normal_distribution<double> nd(0.0, 0.7);
    for (auto& o : p.observations) o.pixel += Vec2(nd(rng), nd(rng));
    const double base = bundle_cost(p);
    const Mat3 R = random_rotation(rng);
    const Vec3 t(10, -20, 5);
    const double s = 1.7;
    BundleProblem q = p;
    for (auto& x : q.points) x = s * R * x + t;
    for (auto& pose : q.poses) {
        const Mat3 Rj = pose.R() * R.transpose();
        pose.translation = s * pose.translation - Rj * t;
        pose.rotation = Eigen::Quaterniond(Rj).normalized();
    }
    CHECK(bundle_cost(q) == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("bundle adjustment rejects rank-deficient problems")
{
    BundleProblem p = bundle_truth(14);
    BundleProblem single = p;
    single.poses.resize(1);
    std::erase_if(single.observations, [](const BundleObservation& o) { return o.view != 0; });
    CHECK_THROWS_AS(bundle_adjust(single), DegenerateError);

    BundleProblem line = p;
    for (size_t i = 0; i < line.points.size(); ++i) line.points[i] = Vec3(static_cast<double>(i), 0.0, 0.0);
    CHECK_THROWS_AS(bundle_adjust(line), DegenerateError);
}

TEST_CASE("refine_neutral fixed point, zero weight and normal offset recovery")
{
    const auto& model = default_face_model();
    std::mt19937_64 rng(6);
    const TriMesh coarse = model.synthesize(model.sample_identity(rng), Eigen::VectorXd::Zero(SyntheticFaceModel::kExpressionDims));
    std::vector<Vec3> onMesh;
    for (int i = 0; i < coarse.vertex_count(); ++i) onMesh.push_back(coarse.vertex(i));
    CHECK(max_row_distance(refine_neutral(coarse, onMesh).vertices(), coarse.vertices()) < 1e-6);

    RefineOptions zero;
    zero.weight = 0.0;
    CHECK((refine_neutral(coarse, onMesh, zero).vertices() - coarse.vertices()).cwiseAbs().maxCoeff() == 0.0);

    const auto normals = vertex_normals(coarse);
    std::vector<Vec3> offset;
    for (int i = 0; i < coarse.vertex_count(); ++i) offset.push_back(coarse.vertex(i) + normals[static_cast<size_t>(i)]);
    const TriMesh fitted = refine_neutral(coarse, offset);
    double mean = 0.0;
    for (int i = 0; i < fitted.vertex_count(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (const Vec3& q : offset) best = std::min(best, (q - fitted.vertex(i)).norm());
        mean += best;
    }
    mean /= fitted.vertex_count();
    MESSAGE("mean vertex-to-cloud distance " << mean << " mm");
    CHECK(mean < 0.1);
    CHECK_THROWS_AS(refine_neutral(coarse, {}), InvalidInput);
}

TEST_CASE("build_blendshapes reproduces and scales the template rig")
{
    const auto& model = default_face_model();
    const BlendshapeRig templ = model.template_rig();
    REQUIRE(templ.shapes().size() == 47);
    const BlendshapeRig same = build_blendshapes(templ.neutral(), templ);
    CHECK(same.shapes().size() == 47);
    for (size_t k = 0; k < 47; ++k) CHECK(max_row_distance(same.shapes()[k].vertices(), templ.shapes()[k].vertices()) < 1e-6);

    const TriMesh scaled = templ.neutral().with_vertices(1.3 * templ.neutral().vertices());
    const BlendshapeRig big = build_blendshapes(scaled, templ);
    CHECK((big.neutral().vertices() - scaled.vertices()).cwiseAbs().maxCoeff() == 0.0);
    for (size_t k = 1; k < 47; ++k) CHECK(max_row_distance(big.shapes()[k].vertices(), 1.3 * templ.shapes()[k].vertices()) < 1e-6);
    CHECK_THROWS_AS(build_blendshapes(planar_grid(4, 4), templ), InvalidInput);
}
