// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

// carimirror <synth|static|texture|track|translate|render> --config <path> [--out <dir>] [--seed <n>]

#include <carimirror/error.hpp>
#include <carimirror/parallel.hpp>
#include <carimirror/pipeline/commands.hpp>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/basic_file_sink.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <iostream>

namespace {

/// One JSON object on stderr so callers can parse failures.
int fail(const std::string& command, const std::string& kind, const std::string& message, int code)
{
    nlohmann::json err = {{"error", kind}, {"command", command}, {"message", message}};
    // Config errors name the key between the first pair of single quotes.
    const auto a = message.find('\''), b = message.find('\'', a + 1);
    if (kind == "config" && a != std::string::npos && b != std::string::npos) err["key"] = message.substr(a + 1, b - a - 1);
    std::cerr << err.dump() << '\n';
    return code;
}

std::shared_ptr<spdlog::logger> make_logger(const std::filesystem::path& logFile, bool verbose)
{
    auto console = std::make_shared<spdlog::sinks::stderr_color_sink_mt>();
    console->set_level(verbose ? spdlog::level::debug : spdlog::level::info);
    console->set_pattern("[%l] %v");
    auto file = std::make_shared<spdlog::sinks::basic_file_sink_mt>(logFile.string(), true);
    file->set_level(spdlog::level::debug);
    auto log = std::make_shared<spdlog::logger>("carimirror", spdlog::sinks_init_list{console, file});
    log->set_level(spdlog::level::debug);
    return log;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"carimirror: multi-view face rig, stylized texture, tracking and caricature translation"};
    app.require_subcommand(1, 1);
    std::string configPath, outDir = "out";
    std::uint64_t seed = 1;
    bool force = false, verbose = false;
    for (const auto& name : carimirror::command_names()) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", configPath, "pipeline configuration (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", outDir, "run directory")->capture_default_str();
        sub->add_option("--seed", seed, "random seed")->capture_default_str();
        sub->add_flag("--force", force, "re-run even if the manifest says the outputs are current");
        sub->add_flag("-v,--verbose", verbose, "debug logging on stderr");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        return fail("", "usage", e.what(), 2);
    }
    const std::string command = app.get_subcommands().front()->get_name();

    carimirror::CommandContext ctx;
    try {
        ctx.config = carimirror::PipelineConfig::load(configPath);
    } catch (const carimirror::ConfigError& e) {
        return fail(command, "config", e.what(), 2);
    } catch (const std::exception& e) {
        return fail(command, "config", std::string(configPath) + ": " + e.what(), 2);
    }

    try {
        ctx.outDir = outDir;
        ctx.seed = seed;
        ctx.force = force;
        std::filesystem::create_directories(ctx.outDir / "logs");
        auto log = make_logger(ctx.outDir / "logs" / (command + ".log"), verbose);
        ctx.log = [log](const std::string& msg) { log->info(msg); };
        log->info("{} (threads {}, seed {})", command, carimirror::worker_count(), seed);
        const auto t0 = std::chrono::steady_clock::now();
        const carimirror::StageReport report = carimirror::run_command(command, ctx);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log->info("{} {} in {:.2f} s: {}", command, report.upToDate ? "up to date" : "done", secs, report.summary.dump());
        log->flush();
    } catch (const carimirror::ConfigError& e) {
        return fail(command, "config", e.what(), 2);
    } catch (const carimirror::FormatError& e) {
        return fail(command, "format", e.what(), 3);
    } catch (const carimirror::InvalidInput& e) {
        return fail(command, "input", e.what(), 3);
    } catch (const carimirror::Error& e) {
        return fail(command, "runtime", e.what(), 4);
    } catch (const std::exception& e) {
        return fail(command, "internal", e.what(), 5);
    }
    return 0;
}
