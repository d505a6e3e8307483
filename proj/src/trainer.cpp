#include "skinres/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>
#include <torch/torch.h>

#include "skinres/augment.hpp"
#include "skinres/error.hpp"
#include "skinres/fsutil.hpp"

namespace skinres {

namespace {

using json = nlohmann::ordered_json;

torch::Tensor to_tensor(const Image& image) {
    return torch::from_blob(const_cast<float*>(image.values().data()),
                            {image.channels(), image.height(), image.width()}, torch::kFloat32)
        .clone();
}

json config_echo(const TrainConfig& c) {
    json j;
    j["run_id"] = c.run_id();
    j["architecture"] = to_string(c.backbone.architecture);
    j["pretrained"] = c.backbone.pretrained;
    j["resolution"] = c.resolution;
    j["optimizer"] = {{"kind", to_string(c.optimizer.kind)},
                      {"base_lr", c.optimizer.base_lr},
                      {"momentum", c.optimizer.momentum},
                      {"head_lr_multiplier", c.optimizer.head_lr_multiplier},
                      {"weight_decay", c.optimizer.weight_decay}};
    j["repeat"] = c.repeat_index;
    j["epochs"] = c.epochs;
    j["lr_drop_epochs"] = c.lr_drop_epochs;
    j["lr_drop_factor"] = c.lr_drop_factor;
    j["batch_size"] = c.batch_size;
    j["seed"] = c.seed;
    j["augment"] = to_string(c.augment);
    j["model"] = {{"head_init_std", c.model.head_init_std},
                  {"head_hidden", c.model.head_hidden},
                  {"resnet_frozen_blocks", c.model.resnet_frozen_blocks.value_or(
                                               default_resnet_frozen_blocks(c.backbone.architecture))},
                  {"densenet_frozen_blocks", c.model.densenet_frozen_blocks},
                  {"allow_random_backbone", c.model.allow_random_backbone}};
    j["input_fingerprint"] = c.input_fingerprint;
    return j;
}

std::unique_ptr<torch::optim::Optimizer> make_optimizer(const OptimizerSpec& spec,
                                                        std::vector<torch::Tensor> backbone,
                                                        std::vector<torch::Tensor> head,
                                                        const LearningRates& lr) {
    using namespace torch::optim;
    std::vector<OptimizerParamGroup> groups;
    auto add_group = [&](std::vector<torch::Tensor> params, double rate) {
        if (params.empty()) return;
        std::unique_ptr<OptimizerOptions> opts;
        switch (spec.kind) {
            case OptimizerKind::SGDM:
                opts = std::make_unique<SGDOptions>(SGDOptions(rate).momentum(spec.momentum).weight_decay(spec.weight_decay));
                break;
            case OptimizerKind::RMSProp:
                opts = std::make_unique<RMSpropOptions>(RMSpropOptions(rate).weight_decay(spec.weight_decay));
                break;
            case OptimizerKind::Adam:
                opts = std::make_unique<AdamOptions>(AdamOptions(rate).weight_decay(spec.weight_decay));
                break;
        }
        groups.emplace_back(std::move(params), std::move(opts));
    };
    add_group(std::move(backbone), lr.backbone);
    add_group(std::move(head), lr.head);
    switch (spec.kind) {
        case OptimizerKind::SGDM:
            return std::make_unique<SGD>(std::move(groups), SGDOptions(lr.backbone).momentum(spec.momentum));
        case OptimizerKind::RMSProp:
            return std::make_unique<RMSprop>(std::move(groups), RMSpropOptions(lr.backbone));
        case OptimizerKind::Adam:
            return std::make_unique<Adam>(std::move(groups), AdamOptions(lr.backbone));
    }
    fail(ErrorKind::config, "unknown optimiser");
}

// Batches of shuffled sample indices; a trailing singleton joins the previous batch because
// batch-norm statistics need at least two samples.
std::vector<std::vector<std::int64_t>> make_batches(std::vector<std::int64_t> order, int batch_size) {
    std::vector<std::vector<std::int64_t>> batches;
    for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
        const auto end = std::min(order.size(), i + static_cast<std::size_t>(batch_size));
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    if (batches.size() > 1 && batches.back().size() == 1) {
        batches[batches.size() - 2].push_back(batches.back().front());
        batches.pop_back();
    }
    return batches;
}

}  // namespace

std::string_view to_string(AugmentMode mode) noexcept {
    return mode == AugmentMode::full_orbit ? "full_orbit" : "random_element";
}

OptimizerSpec OptimizerSpec::defaults(OptimizerKind kind) {
    OptimizerSpec spec;
    spec.kind = kind;
    spec.base_lr = kind == OptimizerKind::SGDM ? 1e-3 : 1e-4;
    return spec;
}

void OptimizerSpec::validate() const {
    if (!(base_lr > 0.0)) fail(ErrorKind::config, fmt::format("base learning rate must be positive, got {}", base_lr));
    if (!(head_lr_multiplier > 0.0)) fail(ErrorKind::config, "head learning-rate multiplier must be positive");
    if (momentum < 0.0 || momentum >= 1.0) fail(ErrorKind::config, fmt::format("momentum {} outside [0, 1)", momentum));
    if (weight_decay < 0.0) fail(ErrorKind::config, "weight decay must be non-negative");
}

int TrainConfig::default_batch_size(int resolution) noexcept { return resolution <= 224 ? 32 : 16; }

RunCell TrainConfig::cell() const {
    return {backbone.architecture, resolution, optimizer.kind, repeat_index};
}

void TrainConfig::validate() const {
    optimizer.validate();
    if (epochs < 0) fail(ErrorKind::config, fmt::format("epochs must be >= 0, got {}", epochs));
    for (int e : lr_drop_epochs) {
        if (epochs >= 1 && (e < 1 || e > epochs)) {
            fail(ErrorKind::config, fmt::format("learning-rate drop epoch {} outside [1, {}]", e, epochs));
        }
    }
    if (!(lr_drop_factor >= 1.0)) fail(ErrorKind::config, "learning-rate drop factor must be >= 1");
    if (batch_size < 2) fail(ErrorKind::config, fmt::format("batch size must be >= 2, got {}", batch_size));
    if (!is_supported_resolution(resolution)) fail(ErrorKind::config, fmt::format("unsupported resolution {}", resolution));
    if (repeat_index < 1) fail(ErrorKind::config, "repeat index must be >= 1");
}

std::string TrainConfig::hash() const { return sha256_hex(config_echo(*this).dump()); }

LearningRates lr_at_epoch(const TrainConfig& config, int epoch) {
    if (epoch < 1 || epoch > config.epochs) {
        fail(ErrorKind::contract, fmt::format("epoch {} outside [1, {}]", epoch, config.epochs));
    }
    int drops = 0;
    for (int e : config.lr_drop_epochs) {
        if (e < epoch) ++drops;
    }
    const double backbone = config.optimizer.base_lr / std::pow(config.lr_drop_factor, drops);
    return {backbone, backbone * config.optimizer.head_lr_multiplier};
}

TrainingDefaults TrainingDefaults::from_config(const KeyValueConfig& cfg) {
    TrainingDefaults d;
    d.epochs = static_cast<int>(cfg.get_int("training.epochs", d.epochs));
    if (const auto drops = cfg.find_list("training.lr_drop_epochs")) {
        d.lr_drop_epochs.clear();
        for (const auto& s : *drops) {
            try {
                d.lr_drop_epochs.push_back(std::stoi(s));
            } catch (const std::exception&) {
                fail(ErrorKind::config, fmt::format("training.lr_drop_epochs: '{}' is not an integer", s));
            }
        }
    }
    d.lr_drop_factor = cfg.get_double("training.lr_drop_factor", d.lr_drop_factor);
    if (cfg.contains("training.batch_size")) d.batch_size = static_cast<int>(cfg.get_int("training.batch_size", 32));
    d.head_lr_multiplier = cfg.get_double("training.head_lr_multiplier", d.head_lr_multiplier);
    d.weight_decay = cfg.get_double("training.weight_decay", d.weight_decay);
    d.pretrained = cfg.get_bool("training.pretrained", d.pretrained);
    d.allow_random_backbone = cfg.get_bool("training.allow_random_backbone", d.allow_random_backbone);
    d.head_init_std = cfg.get_double("training.head_init_std", d.head_init_std);
    if (cfg.contains("training.resnet18_frozen_blocks")) {
        d.resnet18_frozen_blocks = static_cast<int>(cfg.get_int("training.resnet18_frozen_blocks", 4));
    }
    if (cfg.contains("training.resnet50_frozen_blocks")) {
        d.resnet50_frozen_blocks = static_cast<int>(cfg.get_int("training.resnet50_frozen_blocks", 14));
    }
    d.densenet_frozen_blocks = static_cast<int>(cfg.get_int("training.densenet_frozen_blocks", d.densenet_frozen_blocks));
    const auto augment = cfg.get_string("training.augment", "full_orbit");
    if (augment == "full_orbit") d.augment = AugmentMode::full_orbit;
    else if (augment == "random_element") d.augment = AugmentMode::random_element;
    else fail(ErrorKind::config, fmt::format("training.augment: unknown mode '{}'", augment));
    const auto cache_mb = cfg.get_int("training.feature_cache_mb", static_cast<long long>(d.feature_cache_mb));
    if (cache_mb < 0) fail(ErrorKind::config, "training.feature_cache_mb must be >= 0");
    d.feature_cache_mb = static_cast<std::size_t>(cache_mb);
    d.base_seed = static_cast<std::uint64_t>(cfg.get_int("training.seed", static_cast<long long>(d.base_seed)));
    return d;
}

std::uint64_t derive_seed(std::uint64_t base_seed, const std::string& run_id) {
    const auto digest = sha256_hex(fmt::format("{}:{}", base_seed, run_id));
    return std::stoull(digest.substr(0, 15), nullptr, 16);
}

TrainConfig make_train_config(const RunCell& cell, const TrainingDefaults& d) {
    TrainConfig c;
    c.epochs = d.epochs;
    c.lr_drop_epochs = d.lr_drop_epochs;
    c.lr_drop_factor = d.lr_drop_factor;
    c.resolution = cell.resolution;
    c.batch_size = d.batch_size.value_or(TrainConfig::default_batch_size(cell.resolution));
    c.backbone = {cell.architecture, d.pretrained};
    c.optimizer = OptimizerSpec::defaults(cell.optimizer);
    c.optimizer.head_lr_multiplier = d.head_lr_multiplier;
    c.optimizer.weight_decay = d.weight_decay;
    c.repeat_index = cell.repeat;
    c.seed = derive_seed(d.base_seed, cell.run_id());
    c.model.head_init_std = d.head_init_std;
    c.model.allow_random_backbone = d.allow_random_backbone;
    c.model.densenet_frozen_blocks = d.densenet_frozen_blocks;
    if (cell.architecture == Architecture::ResNet18) c.model.resnet_frozen_blocks = d.resnet18_frozen_blocks;
    if (cell.architecture == Architecture::ResNet50) c.model.resnet_frozen_blocks = d.resnet50_frozen_blocks;
    c.augment = d.augment;
    c.feature_cache_mb = d.feature_cache_mb;
    c.validate();
    return c;
}

std::vector<TrainConfig> expand_plan(const ExperimentPlan& plan, const TrainingDefaults& defaults) {
    std::vector<TrainConfig> out;
    for (const auto& cell : plan.cells()) out.push_back(make_train_config(cell, defaults));
    return out;
}

std::optional<RunResult> RunRegistry::load(const std::string& run_id) const {
    const auto path = record_path(run_id);
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) return std::nullopt;
    try {
        const auto j = json::parse(read_file(path));
        RunResult r;
        r.run_id = j.at("run_id").get<std::string>();
        r.status = j.at("status").get<std::string>();
        r.completed = j.at("completed").get<bool>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.config_hash = j.at("config_hash").get<std::string>();
        r.epoch_losses = j.at("epoch_losses").get<std::vector<double>>();
        r.error = j.value("error", "");
        r.checkpoint_sha256 = j.value("checkpoint_sha256", "");
        if (r.completed) r.checkpoint_path = checkpoint_path(run_id);
        return r;
    } catch (const std::exception& e) {
        fail(ErrorKind::schema, fmt::format("corrupt run record {}: {}", path.string(), e.what()));
    }
}

void RunRegistry::save(const RunResult& result, const TrainConfig& config) const {
    json j;
    j["run_id"] = result.run_id;
    j["status"] = result.status;
    j["completed"] = result.completed;
    j["seed"] = result.seed;
    j["config_hash"] = result.config_hash;
    j["config"] = config_echo(config);
    j["epoch_losses"] = result.epoch_losses;
    if (!result.error.empty()) j["error"] = result.error;
    if (result.completed) {
        j["checkpoint"] = checkpoint_path(result.run_id).filename().string();
        j["checkpoint_sha256"] = result.checkpoint_sha256;
    }
    write_if_changed(record_path(result.run_id), j.dump(2) + "\n");
}

bool RunRegistry::is_complete(const TrainConfig& config) const {
    const auto record = load(config.run_id());
    if (!record || !record->completed || record->config_hash != config.hash()) return false;
    const auto ckpt = checkpoint_path(config.run_id());
    std::error_code ec;
    if (!fs::is_regular_file(ckpt, ec)) return false;
    return read_checksum(ckpt) == record->checkpoint_sha256 && sha256_file(ckpt) == record->checkpoint_sha256;
}

RunResult train_run(const TrainConfig& config, const TrainingSet& data, WeightStore* store,
                    const std::filesystem::path& run_dir) {
    config.validate();
    if (data.manifest == nullptr) fail(ErrorKind::contract, "train_run: no manifest");

    RunResult result;
    result.run_id = config.run_id();
    result.seed = config.seed;
    result.config_hash = config.hash();

    PreprocessConfig prep = data.preprocess;
    prep.target_resolution = config.resolution;
    const auto records = data.manifest->split_records(Split::train);
    if (records.empty()) fail(ErrorKind::contract, fmt::format("{}: training split is empty", result.run_id));
    const auto missing = missing_cache_entries(data.cache_root, prep, records);
    if (!missing.empty()) {
        fail(ErrorKind::missing_prerequisite,
             fmt::format("{}: tensor cache at {} px lacks {} of {} training images (first: '{}'); run the "
                         "preprocess stage first",
                         result.run_id, config.resolution, missing.size(), records.size(), missing.front()));
    }

    ModelOptions model_options = config.model;
    model_options.seed = config.seed;
    AdaptedModel model = build_model(config.backbone, model_options, store);
    model->train();

    std::vector<torch::Tensor> backbone_params;
    std::vector<torch::Tensor> head_params;
    for (const auto& item : model->named_parameters()) {
        if (!item.value().requires_grad()) continue;
        (item.key().rfind("head_", 0) == 0 ? head_params : backbone_params).push_back(item.value());
    }

    const auto n_images = static_cast<std::int64_t>(records.size());
    const std::int64_t n_samples = n_images * 8;  // (image, dihedral element) pairs
    std::vector<std::int64_t> targets_all;
    for (const auto& r : records) targets_all.push_back(static_cast<std::int64_t>(r.label));
    const auto targets = torch::tensor(targets_all, torch::kInt64);

    auto load_image = [&](std::int64_t i) {
        return load_cached_tensor(data.cache_root, prep, records[static_cast<std::size_t>(i)].image_id).data;
    };
    // Input batch for (image, element) sample ids.
    auto make_inputs = [&](const std::vector<std::int64_t>& ids) {
        std::vector<torch::Tensor> xs;
        xs.reserve(ids.size());
        for (auto id : ids) xs.push_back(to_tensor(apply(dihedral_elements()[static_cast<std::size_t>(id % 8)], load_image(id / 8))));
        return torch::stack(xs);
    };

    // A random backbone has no meaningful batch-norm statistics; estimate them from the
    // training images before its frozen layers are used.
    if (!model->has_pretrained_backbone() && config.epochs > 0) {
        std::vector<torch::Tensor> batches;
        for (std::int64_t i = 0; i < n_images; i += config.batch_size) {
            std::vector<std::int64_t> ids;
            for (std::int64_t k = i; k < std::min(n_images, i + config.batch_size); ++k) ids.push_back(k * 8);
            if (ids.size() > 1) batches.push_back(make_inputs(ids));
        }
        model->calibrate_batch_norm(batches);
    }

    // Frozen-prefix features for the whole orbit, when that is cheaper than recomputing them
    // every epoch and fits the memory budget.
    torch::Tensor feature_cache;
    const std::int64_t per_epoch = config.augment == AugmentMode::full_orbit ? n_samples : n_images;
    if (model->frozen_stage_count() > 0 && per_epoch * config.epochs > n_samples) {
        torch::NoGradGuard guard;
        const auto probe = model->frozen_features(make_inputs({0}));
        const double mib = static_cast<double>(probe.numel()) * sizeof(float) * static_cast<double>(n_samples) / (1024.0 * 1024.0);
        if (mib <= static_cast<double>(config.feature_cache_mb)) {
            auto shape = probe.sizes().vec();
            shape[0] = n_samples;
            feature_cache = torch::empty(shape, torch::kFloat32);
            const std::int64_t chunk = std::max<std::int64_t>(1, config.batch_size / 8);
            for (std::int64_t i = 0; i < n_images; i += chunk) {
                std::vector<std::int64_t> ids;
                for (std::int64_t k = i; k < std::min(n_images, i + chunk); ++k) {
                    for (std::int64_t g = 0; g < 8; ++g) ids.push_back(k * 8 + g);
                }
                feature_cache.narrow(0, i * 8, static_cast<std::int64_t>(ids.size())).copy_(model->frozen_features(make_inputs(ids)));
            }
        }
    }

    std::unique_ptr<torch::optim::Optimizer> optimizer;
    if (config.epochs > 0) {
        optimizer = make_optimizer(config.optimizer, backbone_params, head_params, lr_at_epoch(config, 1));
    }
    std::mt19937_64 rng(config.seed);

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto lr = lr_at_epoch(config, epoch);
        auto& groups = optimizer->param_groups();
        for (std::size_t g = 0; g < groups.size(); ++g) {
            const bool is_head = g + 1 == groups.size() && !head_params.empty();
            groups[g].options().set_lr(is_head ? lr.head : lr.backbone);
        }

        std::vector<std::int64_t> order;
        if (config.augment == AugmentMode::full_orbit) {
            order.resize(static_cast<std::size_t>(n_samples));
            std::iota(order.begin(), order.end(), std::int64_t{0});
        } else {
            std::uniform_int_distribution<int> pick(0, 7);
            for (std::int64_t i = 0; i < n_images; ++i) order.push_back(i * 8 + pick(rng));
        }
        std::shuffle(order.begin(), order.end(), rng);

        double loss_sum = 0.0;
        std::int64_t seen = 0;
        for (const auto& batch : make_batches(std::move(order), config.batch_size)) {
            const auto ids = torch::tensor(batch, torch::kInt64);
            torch::Tensor features;
            if (feature_cache.defined()) {
                features = feature_cache.index_select(0, ids);
            } else {
                torch::NoGradGuard guard;
                features = model->frozen_features(make_inputs(batch));
            }
            const auto logits = model->forward_from_frozen(features);
            const auto loss = torch::nn::functional::cross_entropy(logits, targets.index_select(0, torch::floor_divide(ids, 8)));
            optimizer->zero_grad();
            loss.backward();
            optimizer->step();
            loss_sum += loss.item<double>() * static_cast<double>(batch.size());
            seen += static_cast<std::int64_t>(batch.size());
        }
        const double epoch_loss = loss_sum / static_cast<double>(seen);
        result.epoch_losses.push_back(epoch_loss);
        if (!std::isfinite(epoch_loss)) {
            result.status = "failed";
            result.error = fmt::format("non-finite loss in epoch {}", epoch);
            return result;
        }
    }

    result.checkpoint_path = run_dir / "model.weights";
    result.checkpoint_sha256 = save_weights(result.checkpoint_path, model->state());
    result.completed = true;
    result.status = "completed";
    return result;
}

std::vector<RunResult> run_matrix(const std::vector<TrainConfig>& plan, const TrainingSet& data,
                                  WeightStore* store, const RunRegistry& registry,
                                  const MatrixOptions& options) {
    std::set<std::string> ids;
    for (const auto& c : plan) {
        if (!ids.insert(c.run_id()).second) {
            fail(ErrorKind::contract, fmt::format("run matrix lists '{}' more than once", c.run_id()));
        }
    }

    std::vector<RunResult> results(plan.size());
    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < plan.size(); ++i) {
        if (options.resume && registry.is_complete(plan[i])) {
            results[i] = *registry.load(plan[i].run_id());
        } else {
            pending.push_back(i);
        }
    }

    std::atomic<std::size_t> next{0};
    std::mutex report_mutex;
    auto worker = [&] {
        for (std::size_t k = next++; k < pending.size(); k = next++) {
            const auto& config = plan[pending[k]];
            auto& result = results[pending[k]];
            LockFile lock(registry.run_dir(config.run_id()) / ".lock");
            if (!lock.acquired()) {
                result.run_id = config.run_id();
                result.status = "busy";
                result.error = "another process holds the cell lock";
                if (options.on_result) {
                    std::lock_guard guard(report_mutex);
                    options.on_result(result);
                }
                continue;
            }
            try {
                result = train_run(config, data, store, registry.run_dir(config.run_id()));
            } catch (const std::exception& e) {
                result = RunResult{};
                result.run_id = config.run_id();
                result.seed = config.seed;
                result.config_hash = config.hash();
                result.status = "failed";
                result.error = e.what();
            }
            registry.save(result, config);
            if (options.on_result) {
                std::lock_guard guard(report_mutex);
                options.on_result(result);
            }
        }
    };
    const int workers = std::max(1, options.workers);
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> threads;
        for (int w = 0; w < workers; ++w) threads.emplace_back(worker);
    }
    return results;
}

AdaptedModel load_trained_model(const TrainConfig& config, const RunRegistry& registry) {
    if (!registry.is_complete(config)) {
        fail(ErrorKind::missing_prerequisite,
             fmt::format("run '{}' has no completed checkpoint matching its configuration; run the train stage",
                         config.run_id()));
    }
    ModelOptions options = config.model;
    options.seed = config.seed;
    AdaptedModel model(config.backbone.architecture, options);
    model->load_state(load_weights(registry.checkpoint_path(config.run_id()), /*require_checksum=*/true));
    model->eval();
    return model;
}

}  // namespace skinres
