// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#include <carimirror/io/json_io.hpp>
#include <carimirror/pipeline/config.hpp>

#include <functional>
#include <set>

namespace carimirror {

namespace {

using Json = nlohmann::json;

std::string join(const std::vector<std::string>& path, const std::string& key)
{
    std::string out;
    for (const auto& p : path) out += p + ".";
    return out + key;
}

/// Reads fields present in the JSON and rejects everything it was not asked for.
class Reader
{
public:
    explicit Reader(const Json& root)
    {
        if (!root.is_object()) throw ConfigError("config: top level must be a JSON object");
        m_stack.push_back({&root, {}});
    }

    void section(const std::string& name, const std::function<void()>& fn)
    {
        Frame& top = m_stack.back();
        top.seen.insert(name);
        if (!top.node->contains(name)) return;
        const Json& child = top.node->at(name);
        if (!child.is_object()) throw ConfigError("config: '" + join(m_path, name) + "' must be an object");
        m_path.push_back(name);
        m_stack.push_back({&child, {}});
        fn();
        finish();
        m_stack.pop_back();
        m_path.pop_back();
    }

    template <typename T>
    void field(const std::string& name, T& value)
    {
        Frame& top = m_stack.back();
        top.seen.insert(name);
        if (!top.node->contains(name)) return;
        const Json& j = top.node->at(name);
        const std::string key = join(m_path, name);
        if constexpr (std::is_same_v<T, bool>) {
            if (!j.is_boolean()) throw ConfigError("config: '" + key + "' must be a boolean");
        } else if constexpr (std::is_integral_v<T>) {
            if (!j.is_number_integer()) throw ConfigError("config: '" + key + "' must be an integer");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!j.is_number()) throw ConfigError("config: '" + key + "' must be a number");
        } else {
            if (!j.is_string()) throw ConfigError("config: '" + key + "' must be a string");
        }
        value = j.get<T>();
    }

    void finish()
    {
        const Frame& top = m_stack.back();
        for (const auto& item : top.node->items()) {
            if (!top.seen.count(item.key())) throw ConfigError("config: unknown key '" + join(m_path, item.key()) + "'");
        }
    }

private:
    struct Frame
    {
        const Json* node;
        std::set<std::string> seen;
    };
    std::vector<Frame> m_stack;
    std::vector<std::string> m_path;
};

class Writer
{
public:
    void section(const std::string& name, const std::function<void()>& fn)
    {
        Json* parent = m_stack.back();
        (*parent)[name] = Json::object();
        m_stack.push_back(&(*parent)[name]);
        fn();
        m_stack.pop_back();
    }

    template <typename T>
    void field(const std::string& name, const T& value)
    {
        (*m_stack.back())[name] = value;
    }

    Json result;

private:
    std::vector<Json*> m_stack{&result};
};

template <typename V, typename C>
void visit(V& v, C& c)
{
    v.field("schemaVersion", c.schemaVersion);
    v.section("synth", [&] {
        v.field("views", c.synth.views);
        v.field("imageSize", c.synth.imageSize);
        v.field("frames", c.synth.frames);
        v.field("identities", c.synth.identities);
        v.field("expressions", c.synth.expressions);
    });
    v.section("static", [&] {
        v.section("fit", [&] {
            v.field("outerIterations", c.statics.fit.outerIterations);
            v.field("lmStepsPerIteration", c.statics.fit.lmStepsPerIteration);
            v.field("landmarkWeight", c.statics.fit.landmarkWeight);
            v.field("photoWeight", c.statics.fit.photoWeight);
            v.field("regularization", c.statics.fit.regularization);
            v.field("albedoTextureSize", c.statics.fit.albedoTextureSize);
        });
        v.section("displacement", [&] {
            v.field("lambdaReg", c.statics.displacement.lambdaReg);
            v.field("iterations", c.statics.displacement.iterations);
            v.field("minFacingCosine", c.statics.displacement.minFacingCosine);
            v.field("searchRadius", c.statics.displacement.searchRadius);
        });
        v.section("bundle", [&] {
            v.field("maxIterations", c.statics.bundle.maxIterations);
            v.field("relativeTolerance", c.statics.bundle.relativeTolerance);
            v.field("optimizeFocal", c.statics.bundle.optimizeFocal);
        });
        v.section("refine", [&] {
            v.field("rounds", c.statics.refine.rounds);
            v.field("weight", c.statics.refine.weight);
        });
    });
    v.section("texture", [&] {
        v.field("dataWeight", c.texture.labeling.dataWeight);
        v.field("maxSweeps", c.texture.labeling.maxSweeps);
        v.field("pairwiseCap", c.texture.labeling.pairwiseCap);
        v.field("atlasSize", c.texture.atlasSize);
    });
    v.section("track", [&] {
        v.field("flow", c.track.weights.flow);
        v.field("spa", c.track.weights.spa);
        v.field("sm", c.track.weights.sm);
        v.field("alternations", c.track.options.alternations);
        v.field("linearizations", c.track.options.weightSolve.linearizations);
        v.field("maxSweeps", c.track.options.weightSolve.maxSweeps);
        v.field("tolerance", c.track.options.weightSolve.tolerance);
        v.field("stride", c.track.stride);
    });
    v.section("translate", [&] { v.field("smoothing", c.translate.smoothing); });
    v.section("render", [&] {
        v.field("width", c.render.width);
        v.field("height", c.render.height);
    });
    v.section("paths", [&] {
        v.field("capture", c.paths.capture);
        v.field("stylized", c.paths.stylized);
        v.field("sequence", c.paths.sequence);
        v.field("weights", c.paths.weights);
    });
}

void require(bool ok, const std::string& key, const std::string& rule)
{
    if (!ok) throw ConfigError("config: '" + key + "' " + rule);
}

} // namespace

PipelineConfig PipelineConfig::from_json(const Json& j)
{
    PipelineConfig c;
    Reader r(j);
    visit(r, c);
    r.finish();
    c.validate();
    return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path)
{
    PipelineConfig c = from_json(io::read_json(path));
    c.baseDir = std::filesystem::absolute(path).parent_path();
    return c;
}

Json PipelineConfig::to_json() const
{
    Writer w;
    visit(w, *this);
    return w.result;
}

void PipelineConfig::validate() const
{
    require(schemaVersion == kConfigSchemaVersion, "schemaVersion",
            "must be " + std::to_string(kConfigSchemaVersion) + " (got " + std::to_string(schemaVersion) + ")");
    require(synth.views >= 2, "synth.views", "must be at least 2");
    require(synth.imageSize >= 32, "synth.imageSize", "must be at least 32");
    require(synth.frames >= 1, "synth.frames", "must be positive");
    require(synth.identities >= 1, "synth.identities", "must be positive");
    require(synth.expressions >= 0, "synth.expressions", "must be nonnegative");
    require(statics.fit.outerIterations >= 1, "static.fit.outerIterations", "must be positive");
    require(statics.fit.regularization >= 0.0, "static.fit.regularization", "must be nonnegative");
    require(statics.fit.albedoTextureSize >= 2, "static.fit.albedoTextureSize", "must be at least 2");
    require(statics.displacement.lambdaReg >= 0.0, "static.displacement.lambdaReg", "must be nonnegative");
    require(statics.bundle.maxIterations >= 0, "static.bundle.maxIterations", "must be nonnegative");
    require(statics.refine.weight >= 0.0, "static.refine.weight", "must be nonnegative");
    require(texture.labeling.dataWeight >= 0.0, "texture.dataWeight", "must be nonnegative");
    require(texture.labeling.maxSweeps >= 1, "texture.maxSweeps", "must be positive");
    require(texture.atlasSize >= 2, "texture.atlasSize", "must be at least 2");
    require(track.weights.flow >= 0.0, "track.flow", "must be nonnegative");
    require(track.weights.spa >= 0.0, "track.spa", "must be nonnegative");
    require(track.weights.sm >= 0.0, "track.sm", "must be nonnegative");
    require(track.options.alternations >= 1, "track.alternations", "must be positive");
    require(track.stride >= 1, "track.stride", "must be positive");
    require(translate.smoothing >= 0.0, "translate.smoothing", "must be nonnegative");
    require(render.width >= 1 && render.height >= 1, "render", "width and height must be positive");
}

std::filesystem::path PipelineConfig::resolve(const std::string& configured, const std::filesystem::path& fallback) const
{
    if (configured.empty()) return fallback;
    const std::filesystem::path p(configured);
    return p.is_absolute() || baseDir.empty() ? p : baseDir / p;
}

} // namespace carimirror
