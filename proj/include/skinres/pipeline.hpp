#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "skinres/catalog.hpp"
#include "skinres/evaluator.hpp"
#include "skinres/fusion.hpp"
#include "skinres/kvconfig.hpp"
#include "skinres/plan.hpp"
#include "skinres/preprocess.hpp"
#include "skinres/trainer.hpp"

namespace skinres {

/// Overrides paths.cache_root when set.
inline constexpr const char* kCacheRootEnv = "SKINRES_CACHE_ROOT";

struct PipelinePaths {
    std::filesystem::path manifest;
    std::filesystem::path cache_root;
    std::optional<std::filesystem::path> weight_store;
    std::filesystem::path runs_dir;
    std::filesystem::path preds_dir;
    std::filesystem::path reports_dir;
};

struct EvaluationSettings {
    /// Node whose table drives the ROC plot, exemplar lists and comparison row.
    /// Empty: L3/final when the plan has one, else the largest single-resolution fusion.
    std::string primary_node;
    bool roc_plot = true;
};

struct PipelineConfig {
    PipelinePaths paths;
    ExperimentPlan plan = ExperimentPlan::paper();
    PreprocessConfig preprocess;  ///< target_resolution is set per stage
    TrainingDefaults training;
    EvaluationSettings evaluation;
    /// Intra-op threads for the tensor runtime; 0 keeps the runtime default.
    int threads = 0;

    /// Sections [paths], [matrix], [preprocess], [training], [evaluation], [runtime].
    /// Relative paths resolve against `base_dir`. Throws Error(config).
    static PipelineConfig from_config(const KeyValueConfig& config, const std::filesystem::path& base_dir);

    /// Reads `config_path` and/or `plan_path` (the plan file is layered on top), then applies
    /// the cache-root environment override. At least one path is required.
    static PipelineConfig load(const std::optional<std::filesystem::path>& config_path,
                               const std::optional<std::filesystem::path>& plan_path);
};

enum class Stage { ingest, preprocess, train, predict, fuse, evaluate, report, all };

std::optional<Stage> parse_stage(std::string_view name);
std::string_view to_string(Stage stage) noexcept;

struct StageOptions {
    int workers = 1;
    bool dry_run = false;
    bool resume = true;
    /// fuse only: "1", "2", "3" or "single"; empty fuses every level.
    std::string fuse_level;
};

/// The ingest -> preprocess -> train -> predict -> fuse -> evaluate -> report chain.
/// Every stage checks its upstream artifacts, skips completed work and rewrites a file only
/// when its bytes change.
class Pipeline {
public:
    Pipeline(PipelineConfig config, std::ostream& log);

    void run(Stage stage, const StageOptions& options = {});

    void ingest();
    void preprocess();
    std::vector<RunResult> train(const StageOptions& options = {});
    void predict(const StageOptions& options = {});
    void fuse(const std::string& level = {});
    void evaluate();
    /// Returns the primary node's report.
    EvalReport report();

    /// Cells, fusion tree and output paths, without touching the disk.
    std::string describe_plan() const;

    const PipelineConfig& config() const noexcept { return config_; }
    const FusionGraph& graph() const noexcept { return graph_; }
    std::vector<TrainConfig> train_configs() const;
    std::string primary_node() const;

private:
    const DatasetManifest& manifest();
    void say(const std::string& text);
    PreprocessConfig preprocess_at(int resolution) const;
    std::filesystem::path provenance_path(const std::string& run_id) const;
    std::string prediction_provenance(const TrainConfig& config, const RunRegistry& registry);

    PipelineConfig config_;
    std::ostream& log_;
    FusionGraph graph_;
    std::optional<DatasetManifest> manifest_;
};

}  // namespace skinres
