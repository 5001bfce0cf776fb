// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <carimirror/error.hpp>
#include <carimirror/statics/bundle.hpp>
#include <carimirror/statics/displacement.hpp>
#include <carimirror/statics/fit.hpp>
#include <carimirror/statics/rig.hpp>
#include <carimirror/texture/fusion.hpp>
#include <carimirror/tracking/tracker.hpp>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>

namespace carimirror {

inline constexpr int kConfigSchemaVersion = 1;

/// Raised for schema violations; the message names the offending key path.
class ConfigError : public InvalidInput
{
public:
    using InvalidInput::InvalidInput;
};

struct SynthConfig
{
    int views = 5;
    int imageSize = 256;
    int frames = 30;
    int identities = 20;
    int expressions = 10;
};

struct StaticConfig
{
    FitOptions fit;
    DisplacementOptions displacement;
    BundleOptions bundle;
    RefineOptions refine;
};

struct TextureConfig
{
    LabelingOptions labeling;
    int atlasSize = 128;
};

struct TrackConfig
{
    TrackingWeights weights;
    TrackOptions options;
    int stride = 2;
};

struct TranslateConfig
{
    double smoothing = 0.001;
};

struct RenderConfig
{
    int width = 256;
    int height = 256;
};

/// Input locations; empty means the default inside the run directory.
struct PathConfig
{
    std::string capture;
    std::string stylized;
    std::string sequence;
    std::string weights;
};

struct PipelineConfig
{
    int schemaVersion = kConfigSchemaVersion;
    SynthConfig synth;
    StaticConfig statics;
    TextureConfig texture;
    TrackConfig track;
    TranslateConfig translate;
    RenderConfig render;
    PathConfig paths;
    /// Directory that relative paths resolve against.
    std::filesystem::path baseDir;

    /// Missing keys keep their defaults; unknown keys and wrong types raise ConfigError.
    static PipelineConfig from_json(const nlohmann::json& j);
    static PipelineConfig load(const std::filesystem::path& path);
    /// Every tunable with its effective value.
    nlohmann::json to_json() const;
    void validate() const;
    /// Absolute input path, or `fallback` when unset.
    std::filesystem::path resolve(const std::string& configured, const std::filesystem::path& fallback) const;
};

} // namespace carimirror
