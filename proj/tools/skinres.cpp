// Command line front end for the multi-resolution skin-lesion pipeline.
//
//   skinres <stage> [--config PATH] [--plan PATH] [--workers N] [--dry-run] [--resume|--no-resume]
//   skinres fuse --level {1,2,3,single}
//
// Failures print one line to stderr:  error: code=<kind> exit=<status> stage=<stage> <message>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "skinres/error.hpp"
#include "skinres/pipeline.hpp"

namespace {

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

int report_failure(std::string_view stage, std::string_view code, int status, const std::string& what) {
    std::cerr << fmt::format("error: code={} exit={} stage={} {}\n", code, status, stage, one_line(what));
    return status;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-resolution transfer-learning pipeline: ingest, preprocess, train, predict, fuse, evaluate, report"};
    app.require_subcommand(1);

    std::optional<std::filesystem::path> config_path;
    std::optional<std::filesystem::path> plan_path;
    skinres::StageOptions options;

    const char* stages[] = {"ingest", "preprocess", "train", "predict", "fuse", "evaluate", "report", "all"};
    for (const char* name : stages) {
        auto* sub = app.add_subcommand(
            name, std::string_view(name) == "all" ? "run every stage in order" : fmt::format("run the {} stage", name));
        sub->add_option("--config", config_path, "pipeline config file")->check(CLI::ExistingFile);
        sub->add_option("--plan", plan_path, "experiment plan file, layered over --config")->check(CLI::ExistingFile);
        sub->add_option("--workers", options.workers, "parallel cells for train and predict")->check(CLI::PositiveNumber);
        sub->add_flag("--dry-run", options.dry_run, "print cells, fusion tree and paths; touch nothing");
        sub->add_flag("--resume,!--no-resume", options.resume, "skip cells already complete (default on)");
        if (std::string_view(name) == "fuse") {
            sub->add_option("--level", options.fuse_level, "fuse one level only")
                ->check(CLI::IsMember({"1", "2", "3", "single"}));
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int status = app.exit(e);
        return status == 0 ? 0 : 2;
    }

    const std::string stage_name = app.get_subcommands().front()->get_name();
    try {
        auto config = skinres::PipelineConfig::load(config_path, plan_path);
        skinres::Pipeline pipeline(std::move(config), std::cout);
        pipeline.run(*skinres::parse_stage(stage_name), options);
    } catch (const skinres::Error& e) {
        return report_failure(stage_name, skinres::to_string(e.kind()), skinres::exit_code_for(e.kind()), e.what());
    } catch (const std::exception& e) {
        return report_failure(stage_name, "runtime", 4, e.what());
    }
    return 0;
}
