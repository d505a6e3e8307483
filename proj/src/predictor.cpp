#include "skinres/predictor.hpp"

#include <cmath>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <torch/torch.h>

#include "skinres/augment.hpp"
#include "skinres/error.hpp"

namespace skinres {

LogitFunction model_logits(AdaptedModel model) {
    return [model](const torch::Tensor& batch) mutable { return forward_logits(model, batch); };
}

std::vector<ProbabilityVector> tta_predict_batch(const LogitFunction& logits,
                                                 std::span<const Image> tensors,
                                                 const std::string& context) {
    if (tensors.empty()) return {};
    std::vector<torch::Tensor> variants;
    variants.reserve(tensors.size() * 8);
    for (const auto& t : tensors) {
        for (const auto& v : orbit(t)) {
            variants.push_back(torch::from_blob(const_cast<float*>(v.values().data()),
                                                {v.channels(), v.height(), v.width()}, torch::kFloat32)
                                   .clone());
        }
    }
    const auto out = logits(torch::stack(variants));
    const auto expected = static_cast<std::int64_t>(variants.size());
    if (out.dim() != 2 || out.size(0) != expected || out.size(1) != kNumClasses) {
        fail(ErrorKind::inference, fmt::format("{}: logits of shape {} for a batch of {}", context,
                                               fmt::join(out.sizes().vec(), "x"), expected));
    }
    const auto z = out.to(torch::kFloat64).contiguous();
    if (!torch::isfinite(z).all().item<bool>()) {
        fail(ErrorKind::inference, fmt::format("{}: non-finite logits", context.empty() ? "model" : context));
    }
    const auto probs = torch::softmax(z, 1);
    const auto* p = probs.data_ptr<double>();

    std::vector<ProbabilityVector> result(tensors.size());
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        ProbabilityVector mean{};
        for (std::size_t g = 0; g < 8; ++g) {
            for (std::size_t c = 0; c < kNumClasses; ++c) mean[c] += p[(i * 8 + g) * kNumClasses + c];
        }
        for (auto& v : mean) v /= 8.0;
        result[i] = mean;
    }
    return result;
}

ProbabilityVector tta_predict(const LogitFunction& logits, const Image& tensor, const std::string& context) {
    return tta_predict_batch(logits, std::span<const Image>(&tensor, 1), context).front();
}

PredictionTable predict_dataset(const LogitFunction& logits, const std::string& source_id,
                                const DatasetManifest& manifest, const std::filesystem::path& cache_root,
                                const PreprocessConfig& config, const PredictOptions& options) {
    const auto records = manifest.split_records(Split::test);
    const auto missing = missing_cache_entries(cache_root, config, records);
    if (!missing.empty()) {
        fail(ErrorKind::missing_prerequisite,
             fmt::format("{}: no cached tensor at {} px for {} test images ({}); run the preprocess stage first",
                         source_id, config.target_resolution, missing.size(), fmt::join(missing, ", ")));
    }

    PredictionTable table;
    table.source_id = source_id;
    const auto step = static_cast<std::size_t>(std::max(1, options.images_per_batch));
    for (std::size_t i = 0; i < records.size(); i += step) {
        std::vector<Image> batch;
        const auto end = std::min(records.size(), i + step);
        for (std::size_t k = i; k < end; ++k) {
            batch.push_back(load_cached_tensor(cache_root, config, records[k].image_id).data);
        }
        const auto probs = tta_predict_batch(logits, batch, fmt::format("{} at '{}'", source_id, records[i].image_id));
        for (std::size_t k = i; k < end; ++k) table.rows.emplace(records[k].image_id, probs[k - i]);
    }
    table.validate();
    return table;
}

}  // namespace skinres
