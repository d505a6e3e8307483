#include "skinres/model_zoo.hpp"

#include <cmath>
#include <functional>
#include <map>

#include <ATen/CPUGeneratorImpl.h>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <torch/torch.h>

#include "skinres/error.hpp"

namespace skinres {

namespace nn = torch::nn;

namespace {

// ---------------------------------------------------------------------------
// Backbones. Module names follow torchvision so exported ImageNet weights load by name.

}  // namespace

/// A backbone is a chain of stages: the stem, then one stage per residual block (ResNet)
/// or per dense block / transition (DenseNet). Freezing always covers a stage prefix.
class BackboneImpl : public nn::Module {
public:
    virtual int num_stages() const = 0;
    virtual torch::Tensor run_stage(int index, torch::Tensor x) = 0;

    torch::Tensor run_stages(int begin, int end, torch::Tensor x) {
        for (int i = begin; i < end; ++i) x = run_stage(i, std::move(x));
        return x;
    }
};

namespace {

nn::Conv2d conv(int64_t in, int64_t out, int64_t k, int64_t stride = 1, int64_t pad = 0) {
    return nn::Conv2d(nn::Conv2dOptions(in, out, k).stride(stride).padding(pad).bias(false));
}

class BasicBlockImpl : public nn::Module {
public:
    static constexpr int64_t kExpansion = 1;

    BasicBlockImpl(int64_t in, int64_t planes, int64_t stride) {
        conv1 = register_module("conv1", conv(in, planes, 3, stride, 1));
        bn1 = register_module("bn1", nn::BatchNorm2d(planes));
        conv2 = register_module("conv2", conv(planes, planes, 3, 1, 1));
        bn2 = register_module("bn2", nn::BatchNorm2d(planes));
        if (stride != 1 || in != planes) {
            downsample = register_module("downsample", nn::Sequential(conv(in, planes, 1, stride), nn::BatchNorm2d(planes)));
        }
    }

    torch::Tensor forward(torch::Tensor x) {
        auto out = torch::relu(bn1(conv1(x)));
        out = bn2(conv2(out));
        return torch::relu(out + (downsample ? downsample->forward(x) : x));
    }

    nn::Conv2d conv1{nullptr}, conv2{nullptr};
    nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
    nn::Sequential downsample{nullptr};
};
TORCH_MODULE(BasicBlock);

class BottleneckImpl : public nn::Module {
public:
    static constexpr int64_t kExpansion = 4;

    BottleneckImpl(int64_t in, int64_t planes, int64_t stride) {
        conv1 = register_module("conv1", conv(in, planes, 1));
        bn1 = register_module("bn1", nn::BatchNorm2d(planes));
        conv2 = register_module("conv2", conv(planes, planes, 3, stride, 1));
        bn2 = register_module("bn2", nn::BatchNorm2d(planes));
        conv3 = register_module("conv3", conv(planes, planes * kExpansion, 1));
        bn3 = register_module("bn3", nn::BatchNorm2d(planes * kExpansion));
        if (stride != 1 || in != planes * kExpansion) {
            downsample = register_module(
                "downsample", nn::Sequential(conv(in, planes * kExpansion, 1, stride), nn::BatchNorm2d(planes * kExpansion)));
        }
    }

    torch::Tensor forward(torch::Tensor x) {
        auto out = torch::relu(bn1(conv1(x)));
        out = torch::relu(bn2(conv2(out)));
        out = bn3(conv3(out));
        return torch::relu(out + (downsample ? downsample->forward(x) : x));
    }

    nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr};
    nn::BatchNorm2d bn1{nullptr}, bn2{nullptr}, bn3{nullptr};
    nn::Sequential downsample{nullptr};
};
TORCH_MODULE(Bottleneck);

class ResNetBackbone final : public BackboneImpl {
public:
    template <typename Block>
    static std::shared_ptr<ResNetBackbone> make(std::array<int, 4> layers) {
        auto net = std::make_shared<ResNetBackbone>();
        net->conv1_ = net->register_module("conv1", conv(3, 64, 7, 2, 3));
        net->bn1_ = net->register_module("bn1", nn::BatchNorm2d(64));
        int64_t in = 64;
        const std::array<int64_t, 4> planes{64, 128, 256, 512};
        for (std::size_t s = 0; s < 4; ++s) {
            nn::Sequential stage;
            for (int b = 0; b < layers[s]; ++b) {
                const int64_t stride = (b == 0 && s > 0) ? 2 : 1;
                Block block(in, planes[s], stride);
                stage->push_back(block);
                net->blocks_.push_back([block](torch::Tensor x) mutable { return block->forward(std::move(x)); });
                in = planes[s] * Block::Impl::kExpansion;
                net->block_paths_.push_back(fmt::format("layer{}.{}", s + 1, b));
            }
            net->register_module(fmt::format("layer{}", s + 1), stage);
        }
        net->feature_dim_ = in;
        return net;
    }

    int num_stages() const override { return 1 + static_cast<int>(blocks_.size()); }

    torch::Tensor run_stage(int index, torch::Tensor x) override {
        if (index == 0) return torch::max_pool2d(torch::relu(bn1_(conv1_(x))), 3, 2, 1);
        return blocks_[static_cast<std::size_t>(index - 1)](std::move(x));
    }

    int64_t feature_dim_ = 0;
    std::vector<std::string> block_paths_;

private:
    nn::Conv2d conv1_{nullptr};
    nn::BatchNorm2d bn1_{nullptr};
    std::vector<std::function<torch::Tensor(torch::Tensor)>> blocks_;
};

class DenseLayerImpl : public nn::Module {
public:
    DenseLayerImpl(int64_t in, int64_t growth, int64_t bn_size) {
        norm1 = register_module("norm1", nn::BatchNorm2d(in));
        conv1 = register_module("conv1", conv(in, bn_size * growth, 1));
        norm2 = register_module("norm2", nn::BatchNorm2d(bn_size * growth));
        conv2 = register_module("conv2", conv(bn_size * growth, growth, 3, 1, 1));
    }

    torch::Tensor forward(torch::Tensor x) {
        auto out = conv1(torch::relu(norm1(x)));
        return conv2(torch::relu(norm2(out)));
    }

    nn::BatchNorm2d norm1{nullptr}, norm2{nullptr};
    nn::Conv2d conv1{nullptr}, conv2{nullptr};
};
TORCH_MODULE(DenseLayer);

class DenseBlockImpl : public nn::Module {
public:
    DenseBlockImpl(int layers, int64_t in, int64_t growth, int64_t bn_size) {
        for (int i = 0; i < layers; ++i) {
            layers_.push_back(register_module(fmt::format("denselayer{}", i + 1), DenseLayer(in + i * growth, growth, bn_size)));
        }
    }

    torch::Tensor forward(torch::Tensor x) {
        std::vector<torch::Tensor> features{x};
        for (auto& layer : layers_) features.push_back(layer->forward(torch::cat(features, 1)));
        return torch::cat(features, 1);
    }

private:
    std::vector<DenseLayer> layers_;
};
TORCH_MODULE(DenseBlock);

class TransitionImpl : public nn::Module {
public:
    TransitionImpl(int64_t in, int64_t out) {
        norm = register_module("norm", nn::BatchNorm2d(in));
        conv_ = register_module("conv", conv(in, out, 1));
    }

    torch::Tensor forward(torch::Tensor x) { return torch::avg_pool2d(conv_(torch::relu(norm(x))), 2, 2); }

    nn::BatchNorm2d norm{nullptr};
    nn::Conv2d conv_{nullptr};
};
TORCH_MODULE(Transition);

class DenseNetBackbone final : public BackboneImpl {
public:
    DenseNetBackbone() {
        constexpr int64_t kGrowth = 32;
        constexpr int64_t kBnSize = 4;
        const std::array<int, 4> block_layers{6, 12, 24, 16};
        features_->push_back("conv0", conv(3, 64, 7, 2, 3));
        features_->push_back("norm0", nn::BatchNorm2d(64));
        features_->push_back("relu0", nn::ReLU());
        features_->push_back("pool0", nn::MaxPool2d(nn::MaxPool2dOptions(3).stride(2).padding(1)));
        int64_t channels = 64;
        for (std::size_t b = 0; b < block_layers.size(); ++b) {
            features_->push_back(fmt::format("denseblock{}", b + 1), DenseBlock(block_layers[b], channels, kGrowth, kBnSize));
            channels += block_layers[b] * kGrowth;
            if (b + 1 < block_layers.size()) {
                features_->push_back(fmt::format("transition{}", b + 1), Transition(channels, channels / 2));
                channels /= 2;
            }
        }
        features_->push_back("norm5", nn::BatchNorm2d(channels));
        register_module("features", features_);
        feature_dim_ = channels;
    }

    // Stages: stem (conv0..pool0), denseblock1, transition1, ..., denseblock4, norm5 + relu.
    int num_stages() const override { return static_cast<int>(features_->size()) - 3; }

    torch::Tensor run_stage(int index, torch::Tensor x) override {
        if (index == 0) {
            for (std::size_t i = 0; i < 4; ++i) x = (features_->begin() + static_cast<std::ptrdiff_t>(i))->forward(x);
            return x;
        }
        x = (features_->begin() + index + 3)->forward(x);
        return index == num_stages() - 1 ? torch::relu(x) : x;
    }

    int64_t feature_dim_ = 0;

private:
    nn::Sequential features_;
};

void init_backbone(nn::Module& backbone, at::Generator& gen) {
    torch::NoGradGuard guard;
    for (auto& m : backbone.modules(/*include_self=*/false)) {
        if (auto* c = m->as<nn::Conv2d>()) {
            // He normal, fan-out mode.
            const auto& w = c->weight;
            const double fan_out = static_cast<double>(w.size(0) * w.size(2) * w.size(3));
            w.normal_(0.0, std::sqrt(2.0 / fan_out), gen);
        } else if (auto* bn = m->as<nn::BatchNorm2d>()) {
            bn->weight.fill_(1.0);
            bn->bias.zero_();
        }
    }
}

bool has_prefix(const std::string& name, const std::vector<std::string>& prefixes) {
    for (const auto& p : prefixes) {
        if (name == p || (name.size() > p.size() && name.compare(0, p.size(), p) == 0 && name[p.size()] == '.')) {
            return true;
        }
    }
    return false;
}

}  // namespace

// ---------------------------------------------------------------------------

std::optional<NamedTensors> DirectoryWeightStore::fetch(Architecture arch) {
    const auto path = path_for(arch);
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) return std::nullopt;
    return load_weights(path, /*require_checksum=*/true);
}

std::string DirectoryWeightStore::describe() const { return dir_.string(); }

std::filesystem::path DirectoryWeightStore::path_for(Architecture arch) const {
    return dir_ / (std::string(to_string(arch)) + ".weights");
}

std::optional<NamedTensors> ChainedWeightStore::fetch(Architecture arch) {
    for (auto& s : stores_) {
        if (auto w = s->fetch(arch)) return w;
    }
    return std::nullopt;
}

std::string ChainedWeightStore::describe() const {
    std::string out;
    for (const auto& s : stores_) out += (out.empty() ? "" : " -> ") + s->describe();
    return out;
}

int default_resnet_frozen_blocks(Architecture arch) noexcept {
    switch (arch) {
        case Architecture::ResNet18: return 4;
        case Architecture::ResNet50: return 14;
        case Architecture::DenseNet121: return 0;
    }
    return 0;
}

std::string_view to_string(Partition p) noexcept {
    switch (p) {
        case Partition::frozen: return "frozen";
        case Partition::backbone_trainable: return "backbone_trainable";
        case Partition::head: return "head";
    }
    return "?";
}

std::int64_t PartitionReport::count(Partition p) const {
    std::int64_t n = 0;
    for (const auto& e : parameters) {
        if (e.partition == p) n += e.numel;
    }
    return n;
}

std::int64_t PartitionReport::total() const {
    std::int64_t n = 0;
    for (const auto& e : parameters) n += e.numel;
    return n;
}

std::vector<std::string> PartitionReport::names(Partition p) const {
    std::vector<std::string> out;
    for (const auto& e : parameters) {
        if (e.partition == p) out.push_back(e.name);
    }
    return out;
}

AdaptedModelImpl::AdaptedModelImpl(Architecture arch, const ModelOptions& options) : arch_(arch) {
    std::shared_ptr<BackboneImpl> backbone;
    switch (arch) {
        case Architecture::ResNet18: {
            auto net = ResNetBackbone::make<BasicBlock>({2, 2, 2, 2});
            feature_dim_ = net->feature_dim_;
            backbone = net;
            break;
        }
        case Architecture::ResNet50: {
            auto net = ResNetBackbone::make<Bottleneck>({3, 4, 6, 3});
            feature_dim_ = net->feature_dim_;
            backbone = net;
            break;
        }
        case Architecture::DenseNet121: {
            auto net = std::make_shared<DenseNetBackbone>();
            feature_dim_ = net->feature_dim_;
            backbone = net;
            break;
        }
    }
    backbone_ = register_module("backbone", backbone);
    fc1_ = register_module("head_fc1", nn::Linear(feature_dim_, options.head_hidden));
    fc2_ = register_module("head_fc2", nn::Linear(options.head_hidden, kNumClasses));

    auto gen = at::make_generator<at::CPUGeneratorImpl>(options.seed);
    init_backbone(*backbone, gen);
    {
        torch::NoGradGuard guard;
        for (auto* fc : {&fc1_, &fc2_}) {
            (*fc)->weight.normal_(0.0, options.head_init_std, gen);
            (*fc)->bias.zero_();
        }
    }
    freeze(options);
}

void AdaptedModelImpl::freeze(const ModelOptions& options) {
    if (arch_ == Architecture::DenseNet121) {
        const int n = options.densenet_frozen_blocks;
        if (n < 0 || n > 4) fail(ErrorKind::config, fmt::format("densenet_frozen_blocks must be in [0, 4], got {}", n));
        if (n > 0) {
            frozen_prefixes_ = {"backbone.features.conv0", "backbone.features.norm0"};
            for (int b = 1; b <= n; ++b) {
                frozen_prefixes_.push_back(fmt::format("backbone.features.denseblock{}", b));
                if (b < 4) frozen_prefixes_.push_back(fmt::format("backbone.features.transition{}", b));
            }
            if (n == 4) frozen_prefixes_.push_back("backbone.features.norm5");
        }
        // stem, then (block, transition) pairs; block 4 is followed by norm5.
        frozen_stages_ = n == 0 ? 0 : (n == 4 ? backbone_->num_stages() : 1 + 2 * n);
        frozen_description_ = n == 0 ? "nothing frozen"
                                     : fmt::format("stem + dense blocks 1-{} with transitions ({} of 4 dense blocks)", n, n);
    } else {
        const auto& blocks = std::dynamic_pointer_cast<ResNetBackbone>(backbone_)->block_paths_;
        const int n = options.resnet_frozen_blocks.value_or(default_resnet_frozen_blocks(arch_));
        if (n < 0 || n > static_cast<int>(blocks.size())) {
            fail(ErrorKind::config, fmt::format("resnet_frozen_blocks must be in [0, {}], got {}", blocks.size(), n));
        }
        if (n > 0) {
            frozen_prefixes_ = {"backbone.conv1", "backbone.bn1"};
            for (int b = 0; b < n; ++b) frozen_prefixes_.push_back("backbone." + blocks[static_cast<std::size_t>(b)]);
            frozen_stages_ = 1 + n;
            frozen_description_ = fmt::format("stem + {}..{} ({} of {} residual blocks)", blocks.front(),
                                              blocks[static_cast<std::size_t>(n - 1)], n, blocks.size());
        } else {
            frozen_description_ = "nothing frozen";
        }
    }

    for (auto& item : named_parameters()) {
        if (has_prefix(item.key(), frozen_prefixes_)) item.value().requires_grad_(false);
    }
    for (const auto& item : named_modules("", /*include_self=*/false)) {
        if (item.value()->as<nn::BatchNorm2d>() && has_prefix(item.key(), frozen_prefixes_)) {
            frozen_norms_.push_back(item.value());
        }
    }
    train(is_training());
}

void AdaptedModelImpl::train(bool on) {
    nn::Module::train(on);
    for (auto& norm : frozen_norms_) norm->train(false);
}

torch::Tensor AdaptedModelImpl::forward(torch::Tensor batch) {
    return forward_from_frozen(frozen_features(std::move(batch)));
}

torch::Tensor AdaptedModelImpl::frozen_features(torch::Tensor batch) {
    return backbone_->run_stages(0, frozen_stages_, std::move(batch));
}

torch::Tensor AdaptedModelImpl::forward_from_frozen(torch::Tensor features) {
    features = backbone_->run_stages(frozen_stages_, backbone_->num_stages(), std::move(features));
    // Global average pooling makes the head independent of the input resolution.
    auto pooled = torch::adaptive_avg_pool2d(features, {1, 1}).flatten(1);
    return fc2_(torch::relu(fc1_(pooled)));
}

PartitionReport AdaptedModelImpl::partition_report() const {
    PartitionReport report;
    for (const auto& item : named_parameters()) {
        Partition p = Partition::backbone_trainable;
        if (item.key().rfind("head_", 0) == 0) p = Partition::head;
        else if (has_prefix(item.key(), frozen_prefixes_)) p = Partition::frozen;
        report.parameters.push_back({item.key(), p, item.value().numel()});
    }
    return report;
}

void AdaptedModelImpl::load_backbone(const NamedTensors& tensors) {
    std::map<std::string, const torch::Tensor*> by_name;
    for (const auto& [name, t] : tensors) by_name["backbone." + name] = &t;

    torch::NoGradGuard guard;
    auto copy_into = [&](const std::string& name, torch::Tensor& dst) {
        if (name.rfind("backbone.", 0) != 0) return;
        const auto it = by_name.find(name);
        if (it == by_name.end()) {
            fail(ErrorKind::weight_store, fmt::format("{}: pretrained weights lack '{}'", to_string(arch_),
                                                      name.substr(std::string_view("backbone.").size())));
        }
        if (it->second->sizes() != dst.sizes()) {
            fail(ErrorKind::weight_store, fmt::format("{}: shape mismatch for '{}'", to_string(arch_), name));
        }
        dst.copy_(*it->second);
    };
    for (auto& item : named_parameters()) copy_into(item.key(), item.value());
    for (auto& item : named_buffers()) {
        if (item.value().is_floating_point()) copy_into(item.key(), item.value());
    }
    pretrained_ = true;
}

void AdaptedModelImpl::calibrate_batch_norm(const std::vector<torch::Tensor>& batches) {
    if (batches.empty()) return;
    std::vector<nn::BatchNorm2d> norms;
    for (const auto& m : backbone_->modules(/*include_self=*/false)) {
        if (auto bn = std::dynamic_pointer_cast<nn::BatchNorm2dImpl>(m)) norms.emplace_back(bn);
    }
    const bool was_training = is_training();
    for (auto& bn : norms) {
        bn->reset_running_stats();
        bn->options.momentum(std::nullopt);  // cumulative average over all batches
        bn->train(true);
    }
    {
        torch::NoGradGuard guard;
        for (const auto& b : batches) backbone_->run_stages(0, backbone_->num_stages(), b);
    }
    for (auto& bn : norms) bn->options.momentum(0.1);
    train(was_training);
}

NamedTensors AdaptedModelImpl::state() const {
    NamedTensors out;
    for (const auto& item : named_parameters()) out.emplace_back(item.key(), item.value().detach().clone());
    for (const auto& item : named_buffers()) {
        if (item.value().is_floating_point()) out.emplace_back(item.key(), item.value().detach().clone());
    }
    return out;
}

void AdaptedModelImpl::load_state(const NamedTensors& tensors) {
    std::map<std::string, const torch::Tensor*> by_name;
    for (const auto& [name, t] : tensors) by_name[name] = &t;
    std::size_t used = 0;
    torch::NoGradGuard guard;
    auto assign = [&](const std::string& name, torch::Tensor& dst) {
        const auto it = by_name.find(name);
        if (it == by_name.end() || it->second->sizes() != dst.sizes()) {
            fail(ErrorKind::weight_store, fmt::format("checkpoint does not match model: '{}'", name));
        }
        dst.copy_(*it->second);
        ++used;
    };
    for (auto& item : named_parameters()) assign(item.key(), item.value());
    for (auto& item : named_buffers()) {
        if (item.value().is_floating_point()) assign(item.key(), item.value());
    }
    if (used != tensors.size()) fail(ErrorKind::weight_store, "checkpoint has tensors unknown to the model");
}

AdaptedModel build_model(const BackboneSpec& spec, const ModelOptions& options, WeightStore* store) {
    AdaptedModel model(spec.architecture, options);
    if (spec.pretrained) {
        std::optional<NamedTensors> weights;
        if (store != nullptr) weights = store->fetch(spec.architecture);
        if (weights) {
            model->load_backbone(*weights);
        } else if (!options.allow_random_backbone) {
            fail(ErrorKind::weight_store,
                 fmt::format("no pretrained weights for {} in store '{}'", to_string(spec.architecture),
                             store != nullptr ? store->describe() : "<none>"));
        }
    }
    return model;
}

torch::Tensor forward_logits(AdaptedModel& model, const torch::Tensor& batch) {
    if (batch.dim() != 4 || batch.size(1) != 3 || batch.size(2) != batch.size(3)) {
        fail(ErrorKind::shape, fmt::format("expected a (B, 3, R, R) batch, got {}", fmt::join(batch.sizes(), "x")));
    }
    const auto r = static_cast<int>(batch.size(2));
    if (!is_supported_resolution(r)) fail(ErrorKind::shape, fmt::format("unsupported input resolution {}", r));
    if (batch.size(0) == 0) return torch::empty({0, kNumClasses});
    torch::NoGradGuard guard;
    model->eval();
    return model->forward(batch.to(torch::kFloat32));
}

}  // namespace skinres
