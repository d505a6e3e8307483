#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "skinres/catalog.hpp"
#include "skinres/kvconfig.hpp"
#include "skinres/model_zoo.hpp"
#include "skinres/plan.hpp"
#include "skinres/preprocess.hpp"

namespace skinres {

struct OptimizerSpec {
    OptimizerKind kind = OptimizerKind::SGDM;
    double base_lr = 1e-3;
    double momentum = 0.9;  ///< SGDM only
    double head_lr_multiplier = 10.0;
    double weight_decay = 0.0;

    /// SGDM 1e-3 with momentum 0.9; RMSProp and Adam 1e-4.
    static OptimizerSpec defaults(OptimizerKind kind);
    void validate() const;
};

/// How the dihedral orbit enters training.
enum class AugmentMode {
    full_orbit,      ///< each epoch visits every (image, transform) pair once: 8x the data
    random_element,  ///< each epoch visits every image once under a random transform
};

struct TrainConfig {
    int epochs = 15;
    /// The rate drops after these epochs complete.
    std::vector<int> lr_drop_epochs{5, 10};
    double lr_drop_factor = 10.0;
    int batch_size = 32;
    int resolution = 224;
    BackboneSpec backbone;
    OptimizerSpec optimizer;
    int repeat_index = 1;
    std::uint64_t seed = 0;
    ModelOptions model;
    AugmentMode augment = AugmentMode::full_orbit;
    /// Frozen-prefix features are precomputed when they fit in this many MiB.
    std::size_t feature_cache_mb = 1024;
    /// Identifies the training inputs (manifest and preprocessing); part of hash().
    std::string input_fingerprint;

    /// 32 up to 224 px, 16 above.
    static int default_batch_size(int resolution) noexcept;

    RunCell cell() const;
    std::string run_id() const { return cell().run_id(); }
    /// Throws Error(config). epochs == 0 is accepted and trains nothing.
    void validate() const;
    /// Digest of every field that influences the trained weights.
    std::string hash() const;
};

struct LearningRates {
    double backbone = 0.0;
    double head = 0.0;
};

/// Piecewise-constant schedule; 1-based epoch. Throws Error(contract) outside [1, epochs].
LearningRates lr_at_epoch(const TrainConfig& config, int epoch);

/// Defaults applied to every cell of a plan, from the `[training]` config section.
struct TrainingDefaults {
    int epochs = 15;
    std::vector<int> lr_drop_epochs{5, 10};
    double lr_drop_factor = 10.0;
    std::optional<int> batch_size;  ///< default_batch_size(R) when unset
    double head_lr_multiplier = 10.0;
    double weight_decay = 0.0;
    bool pretrained = true;
    bool allow_random_backbone = false;
    double head_init_std = 1.0;
    std::optional<int> resnet18_frozen_blocks;
    std::optional<int> resnet50_frozen_blocks;
    int densenet_frozen_blocks = 3;
    AugmentMode augment = AugmentMode::full_orbit;
    std::size_t feature_cache_mb = 1024;
    std::uint64_t base_seed = 2019;

    static TrainingDefaults from_config(const KeyValueConfig& config);
};

/// Seed for one cell, derived from the base seed and run id.
std::uint64_t derive_seed(std::uint64_t base_seed, const std::string& run_id);

TrainConfig make_train_config(const RunCell& cell, const TrainingDefaults& defaults);
std::vector<TrainConfig> expand_plan(const ExperimentPlan& plan, const TrainingDefaults& defaults);

/// Training images: the manifest's train split read from the preprocessed tensor cache.
struct TrainingSet {
    const DatasetManifest* manifest = nullptr;
    std::filesystem::path cache_root;
    PreprocessConfig preprocess;  ///< target_resolution is overridden per run
};

struct RunResult {
    std::string run_id;
    std::filesystem::path checkpoint_path;
    std::vector<double> epoch_losses;
    bool completed = false;
    std::string status;  ///< "completed", "failed" or "busy"
    std::string error;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::string checkpoint_sha256;
};

/// Layout: <runs>/<run_id>/run.json, model.weights, model.weights.sha256, .lock
class RunRegistry {
public:
    explicit RunRegistry(std::filesystem::path runs_dir) : dir_(std::move(runs_dir)) {}

    const std::filesystem::path& dir() const noexcept { return dir_; }
    std::filesystem::path run_dir(const std::string& run_id) const { return dir_ / run_id; }
    std::filesystem::path record_path(const std::string& run_id) const { return run_dir(run_id) / "run.json"; }
    std::filesystem::path checkpoint_path(const std::string& run_id) const {
        return run_dir(run_id) / "model.weights";
    }

    std::optional<RunResult> load(const std::string& run_id) const;
    void save(const RunResult& result, const TrainConfig& config) const;

    /// Completed with the same config hash and an intact checkpoint.
    bool is_complete(const TrainConfig& config) const;

private:
    std::filesystem::path dir_;
};

/// Fine-tunes one cell and writes its checkpoint into `run_dir`. Non-finite losses end the
/// run with status "failed". Throws Error(missing_prerequisite) if the tensor cache for the
/// run's resolution is incomplete.
RunResult train_run(const TrainConfig& config, const TrainingSet& data, WeightStore* store,
                    const std::filesystem::path& run_dir);

struct MatrixOptions {
    int workers = 1;
    /// Skip cells the registry already holds as complete.
    bool resume = true;
    /// Called once per executed cell, serialised across workers.
    std::function<void(const RunResult&)> on_result;
};

/// Trains every cell not already complete. Cell failures are recorded and never abort the
/// matrix. Throws Error(contract) if run ids repeat.
std::vector<RunResult> run_matrix(const std::vector<TrainConfig>& plan, const TrainingSet& data,
                                  WeightStore* store, const RunRegistry& registry,
                                  const MatrixOptions& options = {});

/// Loads a trained model from the registry for inference.
AdaptedModel load_trained_model(const TrainConfig& config, const RunRegistry& registry);

std::string_view to_string(AugmentMode mode) noexcept;

}  // namespace skinres
