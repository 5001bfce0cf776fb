// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

// File-level pipeline stages behind the CLI. Every stage reads its inputs from the run directory
// (or from the configured paths), writes only inside its own output directory, and records the
// hashes of what it read and wrote in <out>/manifest.json.

#pragma once

#include <carimirror/pipeline/config.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace carimirror {

struct CommandContext
{
    PipelineConfig config;
    std::filesystem::path outDir;
    std::uint64_t seed = 1;
    /// Re-run even when the manifest says the outputs are current.
    bool force = false;
    std::function<void(const std::string&)> log = [](const std::string&) {};
};

struct StageReport
{
    std::vector<std::filesystem::path> inputs;
    std::vector<std::filesystem::path> outputs;
    nlohmann::json summary = nlohmann::json::object();
    /// True when the stage was skipped because nothing changed.
    bool upToDate = false;
};

/// Synthetic fixture: capture views, stylized views, a tracked sequence with ground truth,
/// the template rig and the trainer corpora with their manifests. Writes <out>/dataset.
StageReport cmd_synth(const CommandContext& ctx);
/// Coarse fit, displacement field, bundle adjustment, refinement and blendshapes. Writes <out>/rig.
StageReport cmd_static(const CommandContext& ctx);
/// Labeling and Poisson fusion of the stylized views. Writes <out>/texture.
StageReport cmd_texture(const CommandContext& ctx);
/// Per-frame pose and blendshape weights. Writes <out>/track/track.json.
StageReport cmd_track(const CommandContext& ctx);
/// Tracked regular meshes to the caricature style. Writes <out>/caricature/frame_XXXX.obj.
StageReport cmd_translate(const CommandContext& ctx);
/// Textured previews of the caricature sequence. Writes <out>/caricature/preview.
StageReport cmd_render(const CommandContext& ctx);

std::vector<std::string> command_names();
/// Runs one stage and records it in the manifest; skips it when the recorded hashes still match.
StageReport run_command(const std::string& name, const CommandContext& ctx);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_text(const std::string& text);

} // namespace carimirror
