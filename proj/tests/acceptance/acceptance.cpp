// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

// Acceptance gate: one PASS/FAIL line per primary criterion, nonzero exit on any failure.

#include "oracles/statics.hpp"
#include "oracles/texture.hpp"
#include "oracles/tracking.hpp"
#include "support.hpp"

#include <carimirror/statics/bundle.hpp>
#include <carimirror/statics/lighting.hpp>
#include <carimirror/style/bundle.hpp>
#include <carimirror/style/fixture.hpp>
#include <carimirror/style/translator.hpp>
#include <carimirror/synthetic.hpp>
#include <carimirror/texture/fusion.hpp>
#include <carimirror/tracking/tracker.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

using namespace carimirror;
using namespace carimirror::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start)
{
    return std::chrono::duration<double>(Clock::now() - start).count();
}

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Outcome
{
    bool pass = false;
    std::string detail;
};

Outcome l1_shooting()
{
    std::mt19937_64 rng(1001);
    std::uniform_real_distribution<double> lambdaDist(0.0, 5.0);
    double worst = 0.0;
    double solverTime = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const Instance inst = random_instance(rng, 5, 12);
        const double lambda = lambdaDist(rng);
        const auto start = Clock::now();
        const ShootingResult r = solve_shooting(inst.H, inst.g, lambda, Eigen::VectorXd::Zero(5), 100, 1e-9);
        solverTime += seconds_since(start);
        const Eigen::VectorXd oracle = projected_gradient(inst.H, inst.g, lambda);
        worst = std::max(worst, std::abs(box_objective(inst.H, inst.g, lambda, r.w) - box_objective(inst.H, inst.g, lambda, oracle)));
    }
    std::ostringstream s;
    s << "50 instances, worst objective gap " << worst << ", solver time " << solverTime * 1e3 << " ms";
    return {worst <= 1e-6 && solverTime < 1.0, s.str()};
}

Outcome graph_cut()
{
    std::mt19937_64 rng(1002);
    const int shapes[][2] = {{2, 2}, {3, 2}, {2, 3}, {3, 3}, {4, 2}, {2, 5}, {4, 3}, {3, 4}, {6, 2}, {2, 6}};
    LabelingOptions opts;
    int exact = 0;
    const int twoLabel = 120;
    for (int trial = 0; trial < twoLabel; ++trial) {
        const int w = shapes[trial % 10][0];
        const int h = shapes[trial % 10][1];
        opts.dataWeight = trial % 3 == 0 ? 0.05 : (trial % 3 == 1 ? 0.4 : 1.2);
        const auto views = random_views(rng, 2, w, h, 0.8);
        const LabelingResult r = solve_labeling(views, {}, opts);
        const double oracle = brute_force_minimum(views, w, h, opts.dataWeight, opts.pairwiseCap);
        const double got = reference_energy(r.labels.label, views, w, h, opts.dataWeight, opts.pairwiseCap);
        if (std::abs(got - oracle) <= 1e-9 * std::max(1.0, oracle)) ++exact;
    }

    double worstRatio = 0.0;
    bool monotone = true;
    const int threeLabel = 200;
    for (int trial = 0; trial < threeLabel; ++trial) {
        opts.dataWeight = trial % 2 == 0 ? 0.1 : 0.8;
        const auto views = random_views(rng, 3, 2, 2, 0.8);
        const LabelingResult r = solve_labeling(views, {}, opts);
        for (size_t k = 1; k < r.energyHistory.size(); ++k) monotone = monotone && r.energyHistory[k] <= r.energyHistory[k - 1];
        const double oracle = brute_force_minimum(views, 2, 2, opts.dataWeight, opts.pairwiseCap);
        const double got = reference_energy(r.labels.label, views, 2, 2, opts.dataWeight, opts.pairwiseCap);
        worstRatio = std::max(worstRatio, got / oracle);
    }
    std::ostringstream s;
    s << "2 labels: " << exact << "/" << twoLabel << " exact (up to 12 texels); 3 labels on 4 texels: worst energy / minimum "
      << worstRatio << " over " << threeLabel << ", sweeps " << (monotone ? "non-increasing" : "INCREASED");
    return {exact == twoLabel && worstRatio <= 1.01 && monotone, s.str()};
}

Outcome poisson()
{
    // Single source: the blend must reproduce it.
    const int w = 10;
    const int h = 9;
    ViewSample v(w, h);
    std::fill(v.valid.begin(), v.valid.end(), 1);
    TextureAtlas templ = flat_atlas(w, h, Vec3::Zero());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const Vec3 c(0.5 + 0.4 * std::sin(0.7 * x + 0.3 * y), 0.1 + 0.08 * x, 0.9 - 0.05 * y);
            v.color[static_cast<size_t>(v.index(x, y))] = c;
            for (int ch = 0; ch < 3; ++ch) templ.color.at(x, y, ch) = c[ch];
        }
    }
    LabelMap single{w, h, std::vector<int>(static_cast<size_t>(w * h), kUnassigned)};
    for (int y = 2; y < 7; ++y) {
        for (int x = 1; x < 8; ++x) single.label[static_cast<size_t>(y * w + x)] = 0;
    }
    const TextureAtlas out = poisson_blend(single, {v}, templ);
    double sourceError = 0.0;
    for (size_t i = 0; i < out.color.data().size(); ++i) sourceError = std::max(sourceError, std::abs(out.color.data()[i] - templ.color.data()[i]));

    // 8 x 8 checkerboard of two labels inside a fixed ring.
    const int n = 12;
    std::mt19937_64 rng(1003);
    auto views = random_views(rng, 2, n, n, 1.0);
    for (auto& view : views) {
        for (auto& c : view.color) c = 0.3 + 0.4 * c.array();
    }
    LabelMap mixed{n, n, std::vector<int>(static_cast<size_t>(n * n), kUnassigned)};
    for (int y = 2; y < 10; ++y) {
        for (int x = 2; x < 10; ++x) mixed.label[static_cast<size_t>(y * n + x)] = (x + y) % 2;
    }
    const TextureAtlas blended = poisson_blend(mixed, views, flat_atlas(n, n, Vec3(0.5, 0.4, 0.6)), {.clamp = false});
    double residual = 0.0;
    for (int y = 2; y < 10; ++y) {
        for (int x = 2; x < 10; ++x) {
            Vec3 lap = Vec3::Zero();
            Vec3 div = Vec3::Zero();
            const int nbr[4][2] = {{x + 1, y}, {x - 1, y}, {x, y + 1}, {x, y - 1}};
            for (const auto& q : nbr) {
                for (int ch = 0; ch < 3; ++ch) lap[ch] += blended.color.at(x, y, ch) - blended.color.at(q[0], q[1], ch);
                div += reference_guidance(mixed, views, x, y, q[0], q[1]);
            }
            residual = std::max(residual, (lap - div).cwiseAbs().maxCoeff());
        }
    }
    std::ostringstream s;
    s << "single-source max error " << sourceError << ", 8x8 mixed-label system residual " << residual;
    return {sourceError < 1e-5 && residual < 1e-6, s.str()};
}

Outcome bundle()
{
    double worstClean = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        std::mt19937_64 rng(2000 + seed);
        const BundleResult r = bundle_adjust(perturbed(bundle_truth(300 + seed), rng, 1.0, 0.01, 2.0));
        worstClean = std::max(worstClean, r.finalMeanError);
    }
    double worstNoisy = 0.0;
    double sumNoisy = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(3000 + seed);
        const BundleProblem noisy = with_pixel_noise(bundle_truth(400 + seed), rng, 0.5);
        const BundleResult r = bundle_adjust(perturbed(noisy, rng, 1.0, 0.01, 2.0));
        worstNoisy = std::max(worstNoisy, r.finalMeanError);
        sumNoisy += r.finalMeanError;
    }
    std::ostringstream s;
    s << "noiseless 5-view worst mean error " << worstClean << " px (5 rigs); sigma 0.5 px worst " << worstNoisy
      << " px, mean " << sumNoisy / 20.0 << " px (20 seeds)";
    return {worstClean < 1e-6 && worstNoisy <= 1.0, s.str()};
}

Outcome tracking()
{
    const Harness& h = harness();
    const int n = h.rig.expression_count();
    const int frames = 30;
    TrackerState state;
    double worstRot = 0.0;
    double sumSq = 0.0;
    bool monotone = true;
    for (int k = 0; k < frames; ++k) {
        const SequenceFrame truth = sequence_truth(k, frames, n, h.distance);
        const TrackResult r = track_frame(h.model, h.frame(truth.pose, truth.weights, k), state);
        for (size_t a = 1; a < r.energies.size(); ++a) monotone = monotone && r.energies[a] <= r.energies[a - 1];
        state = r.state;
        worstRot = std::max(worstRot, rotation_angle_deg(state.pose.rotation, truth.pose.rotation));
        sumSq += (state.weights - truth.weights).squaredNorm() / n;
    }
    const double rmse = std::sqrt(sumSq / frames);

    // Analytic gradients of both data terms at perturbed states.
    std::mt19937_64 rng(1005);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double worstFea = 0.0;
    double worstFlow = 0.0;
    for (int trial = 0; trial < 4; ++trial) {
        const Pose truth = look_at_face(20.0 * (unit(rng) - 0.5), 10.0 * (unit(rng) - 0.5), h.distance);
        Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
        for (int j = 0; j < 4; ++j) w[static_cast<int>(unit(rng) * n) % n] = 0.2 + 0.6 * unit(rng);
        const FrameObservation f = h.frame(truth, w);
        const Pose pose = perturb(truth, 0.02 * Vec3(nd(rng), nd(rng), nd(rng)), 2.0 * Vec3(nd(rng), nd(rng), nd(rng)));
        Eigen::VectorXd wp = w;
        wp[static_cast<int>(unit(rng) * n) % n] += 0.1;

        EnergyGradient g;
        energy_fea(h.model, pose, wp, f, &g);
        const auto fea = [&](const Pose& p, const Eigen::VectorXd& x) { return energy_fea(h.model, p, x, f); };
        worstFea = std::max(worstFea, relative_error(stack(g), numeric_gradient(fea, pose, wp, 1e-6)));

        const std::vector<int> samples = visible_samples(h.model, truth, w, f);
        energy_flow(h.model, pose, wp, f, samples, &g);
        const auto flow = [&](const Pose& p, const Eigen::VectorXd& x) { return energy_flow(h.model, p, x, f, samples); };
        worstFlow = std::max(worstFlow, relative_error(stack(g), numeric_gradient(flow, pose, wp, 1e-7)));
    }

    // Per-frame time at the 11865-vertex reference topology.
    const SyntheticFaceModel big(FaceGrid{113, 105});
    const Harness bh(big, 512);
    std::vector<double> times;
    TrackerState bs;
    const int timed = 12;
    for (int k = 0; k < timed; ++k) {
        const SequenceFrame truth = sequence_truth(k, timed, bh.rig.expression_count(), bh.distance);
        const FrameObservation f = bh.frame(truth.pose, truth.weights, k);
        const auto start = Clock::now();
        bs = track_frame(bh.model, f, bs).state;
        times.push_back(seconds_since(start));
    }
    const double med = median(times) * 1e3;

    std::ostringstream s;
    s << "30 frames: w rmse " << rmse << ", worst rotation " << worstRot << " deg, energy "
      << (monotone ? "non-increasing" : "INCREASED") << "; gradient rel. error fea " << worstFea << ", flow " << worstFlow
      << "; median frame " << med << " ms at " << big.template_mesh().vertex_count()
      << " vertices (reference figure 10 ms; desk limit 50 ms)";
    return {rmse < 0.05 && worstRot < 1.0 && monotone && worstFea < 1e-4 && worstFlow < 1e-4 && med < 50.0, s.str()};
}

Outcome latent_smoothing()
{
    std::mt19937_64 rng(1006);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> muDist(0.0, 10.0);
    const auto random_code = [&](int dim) {
        Eigen::VectorXd v(dim);
        for (int i = 0; i < dim; ++i) v[i] = nd(rng);
        return LatentCode{v, StyleDomain::Caricature};
    };
    double worst = 0.0;
    bool identity = true;
    for (int trial = 0; trial < 100; ++trial) {
        const LatentCode p2 = random_code(350);
        const LatentCode p1 = random_code(350);
        const LatentCode c = random_code(350);
        const double mu = muDist(rng);
        Eigen::VectorXd x = Eigen::VectorXd::Zero(350);
        const double step = 0.2 / (1.0 + mu);
        for (int it = 0; it < 400; ++it) {
            const Eigen::VectorXd g = 2.0 * mu * (p2.values - 2.0 * p1.values + x) + 2.0 * (x - c.values);
            if (g.norm() < 1e-13) break;
            x -= step * g;
        }
        worst = std::max(worst, (smooth_latent(p2, p1, c, mu).values - x).cwiseAbs().maxCoeff());
        identity = identity && smooth_latent(p2, p1, c, 0.0).values == c.values;
    }
    std::ostringstream s;
    s << "100 instances of dim 350: worst deviation " << worst << "; mu = 0 " << (identity ? "exact" : "NOT exact");
    return {worst < 1e-8 && identity, s.str()};
}

Outcome sh_shading()
{
    std::mt19937_64 rng(1007);
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
        const Vec3 n = random_unit(rng);
        const auto got = sh_basis(n);
        const auto want = sh_table(n);
        for (size_t i = 0; i < 9; ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
    }
    std::ostringstream s;
    s << "20 normals x 9 basis functions: worst deviation " << worst;
    return {worst < 1e-12, s.str()};
}

Outcome style_translation()
{
    const auto& fm = default_face_model();
    const StyleModel model(load_weights(std::filesystem::path(CARIMIRROR_FIXTURE_DIR) / "style_toy.cmw"), fm.template_mesh());
    std::mt19937_64 rng(1008);
    double worstRecon = 0.0;
    for (FaceStyle style : {FaceStyle::Regular, FaceStyle::Exaggerated}) {
        const StyleDomain d = style == FaceStyle::Regular ? StyleDomain::Regular : StyleDomain::Caricature;
        for (int i = 0; i < 50; ++i) {
            const TriMesh x = fm.synthesize(fm.sample_identity(rng), fm.sample_expression(rng), style);
            const TriMesh r = model.decode(model.encode(x, d));
            worstRecon = std::max(worstRecon, (r.vertices() - x.vertices()).rowwise().norm().mean() / x.bbox_diagonal());
        }
    }
    double worstCycle = 0.0;
    for (int i = 0; i < 50; ++i) {
        const LatentCode x = model.encode(fm.synthesize(fm.sample_identity(rng), fm.sample_expression(rng)), StyleDomain::Regular);
        const LatentCode back = model.translate_latent(model.translate_latent(x));
        worstCycle = std::max(worstCycle, (back.values - x.values).norm() / x.values.norm());
    }

    // Timing at the reference topology with an architecture-conformant random bundle.
    const SyntheticFaceModel big(FaceGrid{113, 105});
    const StyleModel bigModel(random_style_bundle(big.template_mesh(), StyleArchitecture{}, 5), big.template_mesh());
    const Eigen::VectorXd id = big.sample_identity(rng);
    std::vector<TriMesh> frames;
    const int count = 10;
    for (int k = 0; k < count; ++k) frames.push_back(big.synthesize(id, big.sample_expression(rng)));
    const auto start = Clock::now();
    const TranslatedSequence seq = translate_sequence(frames, bigModel, 0.001);
    const double perFrame = seconds_since(start) / count * 1e3;

    std::ostringstream s;
    s << "toy bundle: worst reconstruction " << worstRecon * 100.0 << "% of bbox diagonal (100 held-out meshes), worst cycle error "
      << worstCycle << " (50); translate " << perFrame << " ms/frame at " << big.template_mesh().vertex_count()
      << " vertices (reference figure 40 ms; desk limit 200 ms)";
    return {worstRecon < 0.05 && worstCycle < 0.15 && perFrame < 200.0 && seq.meshes.size() == frames.size(), s.str()};
}

} // namespace

int main()
{
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"L1 shooting solver", l1_shooting},
        {"graph-cut labeling", graph_cut},
        {"Poisson blend", poisson},
        {"bundle adjustment", bundle},
        {"tracking", tracking},
        {"smooth_latent", latent_smoothing},
        {"SH shading", sh_shading},
        {"style translation", style_translation},
    };
    int failures = 0;
    for (const auto& [name, run] : criteria) {
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        std::printf("[%s] %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
        std::fflush(stdout);
        failures += o.pass ? 0 : 1;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
