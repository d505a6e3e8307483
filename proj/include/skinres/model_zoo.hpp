#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/nn/module.h>
#include <torch/nn/modules/linear.h>

#include "skinres/types.hpp"
#include "skinres/weights_io.hpp"

namespace skinres {

struct BackboneSpec {
    Architecture architecture = Architecture::ResNet18;
    bool pretrained = true;  ///< ImageNet weights from the weight store
};

/// Source of pretrained backbone weights.
class WeightStore {
public:
    virtual ~WeightStore() = default;
    /// std::nullopt when this store has no weights for the architecture.
    virtual std::optional<NamedTensors> fetch(Architecture arch) = 0;
    virtual std::string describe() const = 0;
};

/// `<dir>/<architecture>.weights` with a `.sha256` sidecar, torchvision parameter naming.
class DirectoryWeightStore final : public WeightStore {
public:
    explicit DirectoryWeightStore(std::filesystem::path dir) : dir_(std::move(dir)) {}
    std::optional<NamedTensors> fetch(Architecture arch) override;
    std::string describe() const override;
    std::filesystem::path path_for(Architecture arch) const;

private:
    std::filesystem::path dir_;
};

/// Tries each store in order; the first hit wins.
class ChainedWeightStore final : public WeightStore {
public:
    explicit ChainedWeightStore(std::vector<std::shared_ptr<WeightStore>> stores) : stores_(std::move(stores)) {}
    std::optional<NamedTensors> fetch(Architecture arch) override;
    std::string describe() const override;

private:
    std::vector<std::shared_ptr<WeightStore>> stores_;
};

struct ModelOptions {
    /// Standard deviation of the N(0, sigma) head weight init; biases start at zero.
    double head_init_std = 1.0;
    int head_hidden = 64;
    /// ResNet: number of leading residual blocks frozen (stem included whenever > 0).
    /// Defaults per architecture when unset: ResNet18 -> 4 of 8, ResNet50 -> 14 of 16.
    std::optional<int> resnet_frozen_blocks;
    /// DenseNet: leading dense blocks frozen, with their transitions and the stem.
    int densenet_frozen_blocks = 3;
    /// When a pretrained backbone is requested but no store has it, fall back to random
    /// initialisation instead of throwing Error(weight_store).
    bool allow_random_backbone = false;
    /// Seed for random initialisation of head and (if needed) backbone.
    std::uint64_t seed = 0;
};

int default_resnet_frozen_blocks(Architecture arch) noexcept;

enum class Partition { frozen, backbone_trainable, head };
std::string_view to_string(Partition p) noexcept;

struct PartitionReport {
    struct Entry {
        std::string name;
        Partition partition;
        std::int64_t numel;
    };
    std::vector<Entry> parameters;

    std::int64_t count(Partition p) const;
    std::int64_t total() const;
    std::vector<std::string> names(Partition p) const;
};

class BackboneImpl;

/// Backbone + global average pooling + two-layer head (feature_dim -> hidden -> 3).
/// Frozen parameters have requires_grad == false and their batch-norm layers stay in
/// inference mode even while the model trains.
class AdaptedModelImpl : public torch::nn::Module {
public:
    AdaptedModelImpl(Architecture arch, const ModelOptions& options);

    torch::Tensor forward(torch::Tensor batch);

    /// Output of the frozen stage prefix. It depends only on the input because frozen
    /// batch-norm layers never leave inference mode, so it may be computed once and reused.
    torch::Tensor frozen_features(torch::Tensor batch);
    /// Trainable stages, pooling and head applied to frozen_features output.
    torch::Tensor forward_from_frozen(torch::Tensor features);
    int frozen_stage_count() const noexcept { return frozen_stages_; }

    void train(bool on = true) override;

    Architecture architecture() const noexcept { return arch_; }
    std::int64_t feature_dim() const noexcept { return feature_dim_; }
    torch::nn::Linear head_hidden() const { return fc1_; }
    torch::nn::Linear head_output() const { return fc2_; }

    /// Every parameter, labelled by partition, in registration order.
    PartitionReport partition_report() const;
    /// Human-readable frozen prefix, e.g. "stem + layer1.0..layer2.1".
    const std::string& frozen_description() const noexcept { return frozen_description_; }

    /// Copies backbone tensors by name. Throws Error(weight_store) on missing or mis-shaped entries.
    void load_backbone(const NamedTensors& tensors);
    bool has_pretrained_backbone() const noexcept { return pretrained_; }

    /// Re-estimates every backbone batch-norm running mean/variance as the cumulative average
    /// over `batches`. A randomly initialised backbone needs this before its frozen layers
    /// produce well-scaled features; pretrained backbones keep their ImageNet statistics.
    void calibrate_batch_norm(const std::vector<torch::Tensor>& batches);

    /// Parameters and float buffers in registration order (the checkpoint contents).
    NamedTensors state() const;
    void load_state(const NamedTensors& tensors);

private:
    void freeze(const ModelOptions& options);

    Architecture arch_;
    std::shared_ptr<BackboneImpl> backbone_;
    int frozen_stages_ = 0;
    torch::nn::Linear fc1_{nullptr};
    torch::nn::Linear fc2_{nullptr};
    std::int64_t feature_dim_ = 0;
    std::vector<std::string> frozen_prefixes_;
    std::vector<std::shared_ptr<torch::nn::Module>> frozen_norms_;
    std::string frozen_description_;
    bool pretrained_ = false;
};
TORCH_MODULE(AdaptedModel);

/// Builds an adapted classifier. Pretrained weights come from `store` when spec.pretrained.
/// Throws Error(weight_store) if they are unavailable and random fallback is not allowed.
AdaptedModel build_model(const BackboneSpec& spec, const ModelOptions& options, WeightStore* store);

/// Inference-mode forward with shape checks: batch must be (B, 3, R, R) with R supported.
/// Throws Error(shape). B == 0 yields a (0, 3) tensor.
torch::Tensor forward_logits(AdaptedModel& model, const torch::Tensor& batch);

}  // namespace skinres
