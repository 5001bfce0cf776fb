// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#include <carimirror/error.hpp>
#include <carimirror/io/json_io.hpp>
#include <carimirror/io/obj.hpp>
#include <carimirror/io/png.hpp>
#include <carimirror/pipeline/commands.hpp>
#include <carimirror/pipeline/scene.hpp>
#include <carimirror/raster.hpp>
#include <carimirror/style/translator.hpp>
#include <carimirror/synthetic.hpp>

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <random>

namespace carimirror {

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

std::string numbered(const std::string& prefix, int k, const std::string& ext, int digits = 2)
{
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%0*d%s", prefix.c_str(), digits, k, ext.c_str());
    return buf;
}

fs::path fresh_dir(const fs::path& dir)
{
    if (fs::exists(dir)) fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

/// Sorted files in `dir` whose names start with `prefix` and end with `suffix`.
std::vector<fs::path> list_files(const fs::path& dir, const std::string& prefix, const std::string& suffix)
{
    if (!fs::is_directory(dir)) throw InvalidInput("input directory " + dir.string() + " does not exist");
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string name = e.path().filename().string();
        if (e.is_regular_file() && name.starts_with(prefix) && name.ends_with(suffix)) {
            const std::string mid = name.substr(prefix.size(), name.size() - prefix.size() - suffix.size());
            if (!mid.empty() && std::all_of(mid.begin(), mid.end(), [](char ch) { return ch >= '0' && ch <= '9'; })) {
                out.push_back(e.path());
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

fs::path require_file(const fs::path& p)
{
    if (!fs::is_regular_file(p)) throw InvalidInput("missing input file " + p.string());
    return p;
}

fs::path landmark_path(const fs::path& image)
{
    fs::path p = image;
    p.replace_extension(".landmarks.json");
    return p;
}

void write_rig(const fs::path& dir, const BlendshapeRig& rig, const Eigen::MatrixX2d& uv, StageReport& report)
{
    for (size_t k = 0; k < rig.shapes().size(); ++k) {
        const fs::path p = dir / numbered("shape", static_cast<int>(k), ".obj");
        io::write_obj(p, rig.shapes()[k], &uv);
        report.outputs.push_back(p);
    }
}

struct LoadedRig
{
    BlendshapeRig rig;
    Eigen::MatrixX2d uv;
};

LoadedRig read_rig(const fs::path& dir, StageReport& report)
{
    const auto files = list_files(dir, "shape_", ".obj");
    if (files.size() < 2) throw InvalidInput("rig directory " + dir.string() + " has fewer than two shapes; run 'static' first");
    LoadedRig out;
    std::vector<TriMesh> shapes;
    for (const auto& f : files) {
        io::ObjData d = io::read_obj(f);
        if (shapes.empty()) {
            if (!d.uv) throw FormatError(f.string() + ": the neutral shape needs per-vertex texture coordinates");
            out.uv = *d.uv;
        }
        shapes.push_back(std::move(d.mesh));
        report.inputs.push_back(f);
    }
    out.rig = BlendshapeRig(std::move(shapes));
    return out;
}

Image read_gray_albedo(const fs::path& path, StageReport& report)
{
    report.inputs.push_back(require_file(path));
    return io::read_png(path, io::Transfer::Linear).to_gray();
}

/// Bilinear resampling onto a new texel grid with the chart convention of both images.
Image resample(const Image& src, int width, int height)
{
    Image out(width, height, src.channels());
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double sx = width > 1 ? x * (src.width() - 1.0) / (width - 1.0) : 0.0;
            const double sy = height > 1 ? y * (src.height() - 1.0) / (height - 1.0) : 0.0;
            for (int c = 0; c < src.channels(); ++c) out.at(x, y, c) = src.sample(sx, sy, c);
        }
    }
    return out;
}

/// Deterministic cartoon look for the synthetic stylized views: luminance in four bands, chroma kept.
Image stylize(const Image& img)
{
    Image out = img;
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            const Vec3 c(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
            const double lum = c.mean();
            if (lum <= 0.0) continue;
            const double band = (std::floor(lum * 4.0) + 0.5) / 4.0;
            const Vec3 s = (c * (band / lum)).cwiseMin(1.0);
            for (int k = 0; k < 3; ++k) out.at(x, y, k) = s[k];
        }
    }
    return out;
}

std::vector<double> rig_yaws(int views)
{
    if (views == 5) return default_rig_yaws();
    std::vector<double> y;
    for (int j = 0; j < views; ++j) y.push_back(-40.0 + 80.0 * j / (views - 1));
    return y;
}

fs::path dataset_dir(const CommandContext& ctx)
{
    return ctx.outDir / "dataset";
}

Json relative_path(const fs::path& p, const fs::path& base)
{
    const fs::path abs = fs::absolute(p).lexically_normal();
    const fs::path rel = abs.lexically_relative(fs::absolute(base).lexically_normal());
    if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
    return abs.generic_string();
}

Json hash_list(const std::vector<fs::path>& files, const fs::path& base)
{
    Json j = Json::object();
    for (const auto& f : files) j[relative_path(f, base).get<std::string>()] = sha256_file(f);
    return j;
}

bool hashes_match(const Json& recorded, const fs::path& base)
{
    for (const auto& item : recorded.items()) {
        fs::path p(item.key());
        if (p.is_relative()) p = base / p;
        if (!fs::is_regular_file(p) || sha256_file(p) != item.value().get<std::string>()) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------------------------

void synth_trainer_corpus(const SyntheticFaceModel& model, const CommandContext& ctx, std::mt19937_64& rng,
                          const fs::path& dir, StageReport& report)
{
    const auto& sc = ctx.config.synth;
    std::vector<Eigen::VectorXd> identities, expressions(1, Eigen::VectorXd::Zero(SyntheticFaceModel::kExpressionDims));
    for (int i = 0; i < sc.identities; ++i) identities.push_back(model.sample_identity(rng));
    for (int e = 0; e < sc.expressions; ++e) expressions.push_back(model.sample_expression(rng));
    for (FaceStyle style : {FaceStyle::Regular, FaceStyle::Exaggerated}) {
        const std::string domain = style == FaceStyle::Regular ? "regular" : "caricature";
        const fs::path ddir = dir / domain;
        fs::create_directories(ddir / "meshes");
        Json meshes = Json::array();
        for (int i = 0; i < sc.identities; ++i) {
            for (size_t e = 0; e < expressions.size(); ++e) {
                const std::string name = numbered("id", i, "", 3) + numbered("_ex", static_cast<int>(e), ".obj", 3).substr(1);
                const fs::path p = ddir / "meshes" / name;
                // Per-identity exaggeration gain makes the caricature corpus style-varied.
                const TriMesh m = model.synthesize(identities[static_cast<size_t>(i)], expressions[e], style,
                                                   style == FaceStyle::Exaggerated ? static_cast<std::uint64_t>(i + 1) : 0);
                io::write_obj(p, m, &model.uv());
                meshes.push_back({{"path", "meshes/" + name}, {"identity", i}, {"expression", static_cast<int>(e)}});
            }
        }
        Json manifest = {{"schemaVersion", 1},
                         {"domain", domain},
                         {"topologyId", model.template_mesh().topology()},
                         {"vertexCount", model.template_mesh().vertex_count()},
                         {"identityCount", sc.identities},
                         {"expressionCount", static_cast<int>(expressions.size())},
                         {"landmarks", "../../template/landmarks.json"},
                         {"meshes", meshes}};
        io::write_json(ddir / "manifest.json", manifest);
        report.outputs.push_back(ddir / "manifest.json");
    }
}

} // namespace

std::string sha256_text(const std::string& text)
{
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("SHA-256 failed");
    std::string hex;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof(buf), "%02x", md[i]);
        hex += buf;
    }
    return hex;
}

std::string sha256_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string() + " for hashing");
    EVP_MD_CTX* md = EVP_MD_CTX_new();
    if (!md || EVP_DigestInit_ex(md, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(md);
        throw Error("SHA-256 init failed");
    }
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() > 0) EVP_DigestUpdate(md, buf.data(), static_cast<size_t>(in.gcount()));
    }
    unsigned char out[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(md, out, &len);
    EVP_MD_CTX_free(md);
    std::string hex;
    char h[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(h, sizeof(h), "%02x", out[i]);
        hex += h;
    }
    return hex;
}

StageReport cmd_synth(const CommandContext& ctx)
{
    StageReport report;
    const auto& sc = ctx.config.synth;
    const auto& model = default_face_model();
    const fs::path root = fresh_dir(dataset_dir(ctx));
    std::mt19937_64 rng(ctx.seed);
    const int size = sc.imageSize;
    const Intrinsics K = default_intrinsics(size, size);
    const double D = default_face_distance(K, size);

    // Template assets.
    const fs::path tdir = root / "template";
    fs::create_directories(tdir);
    write_rig(tdir, model.template_rig(), model.uv(), report);
    io::write_json(tdir / "landmarks.json", io::to_json(model.landmarks()));
    report.outputs.push_back(tdir / "landmarks.json");

    // Multi-view capture of one identity and its stylized counterpart.
    const Eigen::VectorXd identity = model.sample_identity(rng, 0.8);
    const TriMesh neutral = model.synthesize(identity, Eigen::VectorXd::Zero(SyntheticFaceModel::kExpressionDims));
    std::vector<CameraModel> cameras;
    std::uniform_real_distribution<double> jitter(-3.0, 3.0);
    for (double yaw : rig_yaws(sc.views)) {
        Pose p = look_at_face(yaw + jitter(rng), jitter(rng), D);
        p.translation += Vec3(jitter(rng), jitter(rng), 5.0 * jitter(rng));
        cameras.push_back({K, p});
    }
    const AlbedoFn albedo = [](double u, double v) { return synthetic_albedo(u, v); };
    const MultiViewCapture cap = render_capture(neutral, model.uv(), model.landmarks(), cameras, size, size,
                                                soft_key_lighting(), albedo);
    const fs::path cdir = root / "capture", sdir = root / "stylized";
    fs::create_directories(cdir);
    fs::create_directories(sdir);
    Json truthCams = Json::array();
    for (int j = 0; j < cap.view_count(); ++j) {
        const fs::path img = cdir / numbered("view", j, ".png");
        io::write_png(img, cap.views[static_cast<size_t>(j)].image);
        io::write_landmarks(landmark_path(img), cap.views[static_cast<size_t>(j)].landmarks);
        const fs::path styl = sdir / numbered("view", j, ".png");
        io::write_png(styl, stylize(cap.views[static_cast<size_t>(j)].image));
        report.outputs.insert(report.outputs.end(), {img, landmark_path(img), styl});
        truthCams.push_back(io::to_json(cameras[static_cast<size_t>(j)]));
    }
    Json entries = Json::array();
    for (int j = 0; j < cap.view_count(); ++j) {
        entries.push_back({{"image", numbered("view", j, ".png")}, {"landmarks", numbered("view", j, ".landmarks.json")}});
    }
    io::write_json(cdir / "manifest.json", {{"schemaVersion", 1}, {"intrinsics", io::to_json(K)}, {"views", entries}});
    io::write_json(cdir / "truth.json", {{"identity", io::to_json(identity)}, {"cameras", truthCams}});
    report.outputs.push_back(cdir / "manifest.json");
    report.outputs.push_back(cdir / "truth.json");

    // Performance sequence of the same person, rendered in gray with smooth pose and weights.
    const BlendshapeRig userRig = build_blendshapes(neutral, model.template_rig());
    const fs::path qdir = root / "sequence";
    fs::create_directories(qdir);
    Json truthFrames = Json::array();
    const int n = userRig.expression_count();
    for (int k = 0; k < sc.frames; ++k) {
        const double t = sc.frames > 1 ? static_cast<double>(k) / (sc.frames - 1) : 0.0;
        const Pose pose = look_at_face(10.0 * std::sin(2.0 * std::numbers::pi * t), 4.0 * std::sin(std::numbers::pi * t), D);
        Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
        w[0] = 0.5 + 0.4 * std::sin(2.0 * std::numbers::pi * t);
        w[3] = 0.6 * t;
        w[std::min(43, n - 1)] = 0.3 * (1.0 - std::cos(2.0 * std::numbers::pi * t));
        const TriMesh mesh = userRig.neutral().with_vertices(userRig.evaluate(w));
        const CameraModel cam{K, pose};
        const Image frame = render_view(mesh, model.uv(), cam, size, size, ambient_lighting(), albedo, 1);
        const fs::path img = qdir / numbered("frame", k, ".png", 4);
        io::write_png(img, frame);
        io::write_landmarks(landmark_path(img), project_landmarks(mesh, model.landmarks(), cam));
        report.outputs.insert(report.outputs.end(), {img, landmark_path(img)});
        truthFrames.push_back({{"pose", io::to_json(pose)}, {"weights", io::to_json(w)}});
    }
    io::write_json(qdir / "camera.json", {{"intrinsics", io::to_json(K)}, {"width", size}, {"height", size}});
    io::write_json(qdir / "truth.json", {{"frames", truthFrames}});
    report.outputs.push_back(qdir / "camera.json");
    report.outputs.push_back(qdir / "truth.json");

    // Trainer corpora.
    synth_trainer_corpus(model, ctx, rng, root / "trainer", report);
    report.summary = {{"views", cap.view_count()}, {"frames", sc.frames}, {"identities", sc.identities},
                      {"expressions", sc.expressions}};
    ctx.log("synth: wrote " + std::to_string(report.outputs.size()) + " files under " + root.string());
    return report;
}

StageReport cmd_static(const CommandContext& ctx)
{
    StageReport report;
    const auto& cfg = ctx.config;
    const auto& model = default_face_model();
    // paths.capture names a capture manifest or a directory holding manifest.json.
    fs::path manifestFile = cfg.resolve(cfg.paths.capture, dataset_dir(ctx) / "capture");
    if (fs::is_directory(manifestFile)) manifestFile /= "manifest.json";
    report.inputs.push_back(require_file(manifestFile));
    const fs::path cdir = manifestFile.parent_path();
    const Json manifest = io::read_json(manifestFile);
    MultiViewCapture cap;
    FitOptions fitOpts = cfg.statics.fit;
    try {
        for (const Json& e : manifest.at("views")) {
            const fs::path img = require_file(cdir / e.at("image").get<std::string>());
            const fs::path lm = require_file(cdir / e.at("landmarks").get<std::string>());
            CaptureView v;
            v.image = io::read_png(img);
            v.landmarks = io::read_landmarks(lm);
            report.inputs.insert(report.inputs.end(), {img, lm});
            cap.views.push_back(std::move(v));
        }
        if (manifest.contains("intrinsics")) fitOpts.intrinsics = io::intrinsics_from_json(manifest.at("intrinsics"));
    } catch (const Json::exception& e) {
        throw FormatError(manifestFile.string() + ": " + e.what());
    }
    if (cap.view_count() < 2) throw InvalidInput("static: need at least two capture views in " + manifestFile.string());
    cap.validate(SyntheticFaceModel::kLandmarkCount);
    const ParametricBasis basis = ParametricBasis::from_synthetic(model);
    const FitResult fit = fit_parametric_model(cap, basis, fitOpts);
    ctx.log("static: coarse fit landmark RMSE " + std::to_string(fit.landmarkRmse) + " px");

    const DisplacementField field = optimize_displacement(cap, fit.mesh, fit.cameras, cfg.statics.displacement);
    const BundleResult ba = bundle_adjust(field, fit.cameras, fit.mesh, cfg.statics.bundle);
    ctx.log("static: bundle adjustment mean error " + std::to_string(ba.initialMeanError) + " -> " +
            std::to_string(ba.finalMeanError) + " px over " + std::to_string(ba.solution.points.size()) + " points");

    const TriMesh neutral = refine_neutral(fit.mesh, ba.solution.points, cfg.statics.refine);
    const BlendshapeRig rig = build_blendshapes(neutral, model.template_rig());

    const fs::path out = fresh_dir(ctx.outDir / "rig");
    write_rig(out, rig, model.uv(), report);
    Json cams = Json::array(), lights = Json::array();
    for (size_t j = 0; j < ba.solution.poses.size(); ++j) cams.push_back(io::to_json(CameraModel{ba.solution.intrinsics, ba.solution.poses[j]}));
    for (const auto& l : fit.lighting) lights.push_back(io::to_json(l));
    io::write_json(out / "cameras.json", {{"cameras", cams}});
    io::write_json(out / "lighting.json", {{"lighting", lights}});
    io::write_png(out / "albedo.png", fit.albedo.texture, io::Transfer::Linear, 16);
    Eigen::MatrixX3d cloud(static_cast<Eigen::Index>(ba.solution.points.size()), 3);
    for (size_t i = 0; i < ba.solution.points.size(); ++i) cloud.row(static_cast<Eigen::Index>(i)) = ba.solution.points[i].transpose();
    io::write_ply(out / "points.ply", cloud);
    report.summary = {{"landmarkRmse", fit.landmarkRmse},
                      {"fitEnergy", fit.energy},
                      {"bundlePoints", ba.solution.points.size()},
                      {"bundleInitialMeanError", ba.initialMeanError},
                      {"bundleFinalMeanError", ba.finalMeanError},
                      {"bundleIterations", ba.iterations}};
    io::write_json(out / "static.json", report.summary);
    for (const char* f : {"cameras.json", "lighting.json", "albedo.png", "points.ply", "static.json"}) report.outputs.push_back(out / f);
    return report;
}

StageReport cmd_texture(const CommandContext& ctx)
{
    StageReport report;
    const auto& cfg = ctx.config;
    const LoadedRig rig = read_rig(ctx.outDir / "rig", report);
    const fs::path camFile = require_file(ctx.outDir / "rig" / "cameras.json");
    report.inputs.push_back(camFile);
    std::vector<CameraModel> cameras;
    const Json camJson = io::read_json(camFile);
    for (const Json& c : camJson.at("cameras")) cameras.push_back(io::camera_from_json(c));

    const fs::path sdir = cfg.resolve(cfg.paths.stylized, dataset_dir(ctx) / "stylized");
    const auto images = list_files(sdir, "view_", ".png");
    if (images.size() != cameras.size()) {
        throw InvalidInput("texture: " + std::to_string(images.size()) + " stylized views for " + std::to_string(cameras.size()) + " cameras");
    }
    const int A = cfg.texture.atlasSize;
    const TriMesh& mesh = rig.rig.neutral();
    std::vector<ViewSample> views;
    for (size_t j = 0; j < images.size(); ++j) {
        Image img = io::read_png(images[j]);
        if (img.channels() == 1) {
            Image rgb(img.width(), img.height(), 3);
            for (int y = 0; y < img.height(); ++y) {
                for (int x = 0; x < img.width(); ++x) {
                    for (int c = 0; c < 3; ++c) rgb.at(x, y, c) = img.at(x, y);
                }
            }
            img = std::move(rgb);
        }
        views.push_back(sample_view(mesh, rig.uv, cameras[j], img, A, A));
        report.inputs.push_back(images[j]);
    }

    // Template: the fitted gray albedo on the atlas grid; chart texels form the mask.
    const Image albedo = resample(read_gray_albedo(ctx.outDir / "rig" / "albedo.png", report), A, A);
    TextureAtlas templ;
    templ.color = Image(A, A, 3);
    for (int y = 0; y < A; ++y) {
        for (int x = 0; x < A; ++x) {
            for (int c = 0; c < 3; ++c) templ.color.at(x, y, c) = albedo.at(x, y);
        }
    }
    const ChartRaster chart = rasterize_chart(rig.uv, mesh.faces(), A, A);
    templ.mask.resize(chart.face.size());
    for (size_t i = 0; i < chart.face.size(); ++i) templ.mask[i] = chart.face[i] >= 0;

    const FusionResult fused = fuse_texture(views, templ, cfg.texture.labeling);
    const fs::path out = fresh_dir(ctx.outDir / "texture");
    io::write_png(out / "atlas.png", fused.atlas.color);
    const auto& labels = fused.labeling.labels;
    std::vector<std::uint8_t> idx(labels.label.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::uint8_t>(labels.label[i] < 0 ? 0 : labels.label[i] + 1);
    std::vector<std::array<std::uint8_t, 3>> palette = {{0, 0, 0}};
    for (size_t j = 0; j < views.size(); ++j) {
        const double h = static_cast<double>(j) / std::max<size_t>(views.size(), 1);
        palette.push_back({static_cast<std::uint8_t>(127 + 127 * std::cos(6.2832 * h)),
                           static_cast<std::uint8_t>(127 + 127 * std::cos(6.2832 * (h + 0.33))),
                           static_cast<std::uint8_t>(127 + 127 * std::cos(6.2832 * (h + 0.67)))});
    }
    io::write_indexed_png(out / "labels.png", labels.width, labels.height, idx, palette);
    report.summary = {{"energyHistory", fused.labeling.energyHistory}, {"sweeps", fused.labeling.sweeps}, {"atlasSize", A}};
    io::write_json(out / "texture.json", report.summary);
    for (const char* f : {"atlas.png", "labels.png", "texture.json"}) report.outputs.push_back(out / f);
    return report;
}

StageReport cmd_track(const CommandContext& ctx)
{
    StageReport report;
    const auto& cfg = ctx.config;
    const auto& model = default_face_model();
    const LoadedRig rig = read_rig(ctx.outDir / "rig", report);
    const Image albedo = read_gray_albedo(ctx.outDir / "rig" / "albedo.png", report);

    const fs::path qdir = cfg.resolve(cfg.paths.sequence, dataset_dir(ctx) / "sequence");
    const fs::path camFile = require_file(qdir / "camera.json");
    report.inputs.push_back(camFile);
    const Json cam = io::read_json(camFile);
    const Intrinsics K = io::intrinsics_from_json(cam.at("intrinsics"));
    const auto frames = list_files(qdir, "frame_", ".png");
    if (frames.empty()) throw InvalidInput("track: no frame_XXXX.png files in " + qdir.string());

    const TrackingModel tm(rig.rig, rig.uv, model.landmarks().indices, albedo, K, cfg.track.stride);
    TrackerState state;
    Json out = Json::array();
    for (size_t k = 0; k < frames.size(); ++k) {
        FrameObservation obs;
        obs.image = io::read_png(frames[k]).to_gray();
        obs.landmarks = io::read_landmarks(require_file(landmark_path(frames[k])));
        obs.index = static_cast<int>(k);
        report.inputs.insert(report.inputs.end(), {frames[k], landmark_path(frames[k])});
        const TrackResult r = track_frame(tm, obs, state, cfg.track.weights, cfg.track.options);
        state = r.state;
        const Json pose = io::to_json(state.pose);
        out.push_back({{"k", obs.index},
                       {"R", pose.at("rotation")},
                       {"t", pose.at("translation")},
                       {"w", io::to_json(state.weights)},
                       {"energies", r.energies}});
    }
    const fs::path dir = fresh_dir(ctx.outDir / "track");
    io::write_json(dir / "track.json", {{"intrinsics", io::to_json(K)},
                                        {"width", cam.value("width", 0)},
                                        {"height", cam.value("height", 0)},
                                        {"frames", out}});
    report.outputs.push_back(dir / "track.json");
    report.summary = {{"frames", frames.size()}};
    ctx.log("track: tracked " + std::to_string(frames.size()) + " frames");
    return report;
}

StageReport cmd_translate(const CommandContext& ctx)
{
    StageReport report;
    const auto& cfg = ctx.config;
    if (cfg.paths.weights.empty()) throw ConfigError("config: 'paths.weights' must name a weights bundle for translate");
    const fs::path weights = require_file(cfg.resolve(cfg.paths.weights, {}));
    report.inputs.push_back(weights);
    const LoadedRig rig = read_rig(ctx.outDir / "rig", report);
    const fs::path trackFile = require_file(ctx.outDir / "track" / "track.json");
    report.inputs.push_back(trackFile);

    const StyleModel style(load_weights(weights), rig.rig.neutral());
    std::vector<TriMesh> meshes;
    const Json track = io::read_json(trackFile);
    for (const Json& f : track.at("frames")) {
        const Eigen::VectorXd w = io::vector_from_json(f.at("w"));
        if (w.size() != rig.rig.expression_count()) throw FormatError("track.json weights do not match the rig");
        meshes.push_back(rig.rig.neutral().with_vertices(rig.rig.evaluate(w)));
    }
    const TranslatedSequence seq = translate_sequence(meshes, style, cfg.translate.smoothing);
    const fs::path dir = ctx.outDir / "caricature";
    if (fs::exists(dir)) {
        for (const auto& f : list_files(dir, "frame_", ".obj")) fs::remove(f);
    }
    fs::create_directories(dir);
    for (size_t k = 0; k < seq.meshes.size(); ++k) {
        const fs::path p = dir / numbered("frame", static_cast<int>(k), ".obj", 4);
        io::write_obj(p, seq.meshes[k], &rig.uv);
        report.outputs.push_back(p);
    }
    report.summary = {{"frames", seq.meshes.size()}, {"smoothing", cfg.translate.smoothing}};
    ctx.log("translate: wrote " + std::to_string(seq.meshes.size()) + " caricature meshes");
    return report;
}

StageReport cmd_render(const CommandContext& ctx)
{
    StageReport report;
    const auto& cfg = ctx.config;
    const fs::path atlasFile = require_file(ctx.outDir / "texture" / "atlas.png");
    const fs::path trackFile = require_file(ctx.outDir / "track" / "track.json");
    report.inputs.insert(report.inputs.end(), {atlasFile, trackFile});
    const Image atlas = io::read_png(atlasFile);
    const Json track = io::read_json(trackFile);
    const Intrinsics K0 = io::intrinsics_from_json(track.at("intrinsics"));
    const int w0 = track.value("width", 0), h0 = track.value("height", 0);
    // Scale the tracking camera to the preview size.
    Intrinsics K = K0;
    if (w0 > 0 && h0 > 0) {
        const double sx = static_cast<double>(cfg.render.width) / w0, sy = static_cast<double>(cfg.render.height) / h0;
        K = {K0.fx * sx, K0.fy * sy, K0.cx * sx, K0.cy * sy};
    }
    const auto meshes = list_files(ctx.outDir / "caricature", "frame_", ".obj");
    const Json& frames = track.at("frames");
    if (meshes.size() != frames.size()) throw InvalidInput("render: caricature sequence and track differ in length; run 'translate' first");

    const fs::path dir = fresh_dir(ctx.outDir / "caricature" / "preview");
    for (size_t k = 0; k < meshes.size(); ++k) {
        const io::ObjData d = io::read_obj(meshes[k]);
        if (!d.uv) throw FormatError(meshes[k].string() + ": missing texture coordinates");
        report.inputs.push_back(meshes[k]);
        const Pose pose = io::pose_from_json({{"rotation", frames[k].at("R")}, {"translation", frames[k].at("t")}});
        const auto& faces = d.mesh.faces();
        const Eigen::MatrixX2d& uv = *d.uv;
        const Image img = render(d.mesh.vertices(), faces, K, pose, cfg.render.width, cfg.render.height, 3,
                                 [&](int f, const Vec3& b) {
                                     const Face& fc = faces[static_cast<size_t>(f)];
                                     const Vec2 t = b[0] * uv.row(fc[0]).transpose() + b[1] * uv.row(fc[1]).transpose() +
                                                    b[2] * uv.row(fc[2]).transpose();
                                     const double x = t.x() * (atlas.width() - 1), y = (1.0 - t.y()) * (atlas.height() - 1);
                                     Eigen::VectorXd c(3);
                                     for (int ch = 0; ch < 3; ++ch) c[ch] = atlas.sample(x, y, std::min(ch, atlas.channels() - 1));
                                     return c;
                                 });
        const fs::path p = dir / numbered("frame", static_cast<int>(k), ".png", 4);
        io::write_png(p, img);
        report.outputs.push_back(p);
    }
    report.summary = {{"frames", meshes.size()}};
    return report;
}

std::vector<std::string> command_names()
{
    return {"synth", "static", "texture", "track", "translate", "render"};
}

StageReport run_command(const std::string& name, const CommandContext& ctx)
{
    static const std::map<std::string, StageReport (*)(const CommandContext&)> table = {
        {"synth", cmd_synth}, {"static", cmd_static}, {"texture", cmd_texture},
        {"track", cmd_track}, {"translate", cmd_translate}, {"render", cmd_render}};
    const auto it = table.find(name);
    if (it == table.end()) throw InvalidInput("unknown command '" + name + "'");
    fs::create_directories(ctx.outDir / "logs");

    const fs::path manifestFile = ctx.outDir / "manifest.json";
    Json manifest = fs::is_regular_file(manifestFile) ? io::read_json(manifestFile) : Json::object();
    const std::string configHash = sha256_text(ctx.config.to_json().dump());
    if (!ctx.force && manifest.contains("stages") && manifest["stages"].contains(name)) {
        const Json& prev = manifest["stages"][name];
        if (prev.value("configHash", std::string()) == configHash && prev.value("seed", std::uint64_t{0}) == ctx.seed &&
            prev.value("version", std::string()) == kToolVersion && hashes_match(prev.at("inputs"), ctx.outDir) &&
            hashes_match(prev.at("outputs"), ctx.outDir)) {
            ctx.log(name + ": inputs, config and outputs unchanged; nothing to do");
            StageReport r;
            r.upToDate = true;
            r.summary = prev.value("summary", Json::object());
            return r;
        }
    }

    StageReport report = it->second(ctx);
    manifest["schemaVersion"] = 1;
    manifest["tool"] = {{"name", "carimirror"}, {"version", kToolVersion}};
    manifest["stages"][name] = {{"configHash", configHash},
                                {"config", ctx.config.to_json()},
                                {"seed", ctx.seed},
                                {"version", kToolVersion},
                                {"inputs", hash_list(report.inputs, ctx.outDir)},
                                {"outputs", hash_list(report.outputs, ctx.outDir)},
                                {"summary", report.summary}};
    io::write_json(manifestFile, manifest);
    return report;
}

} // namespace carimirror
