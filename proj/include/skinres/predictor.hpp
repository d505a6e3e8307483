#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <torch/types.h>

#include "skinres/catalog.hpp"
#include "skinres/image.hpp"
#include "skinres/model_zoo.hpp"
#include "skinres/prediction_table.hpp"
#include "skinres/preprocess.hpp"

namespace skinres {

/// Maps a (B, 3, R, R) batch to (B, 3) logits.
using LogitFunction = std::function<torch::Tensor(const torch::Tensor&)>;

/// Inference-mode logits of a trained model.
LogitFunction model_logits(AdaptedModel model);

/// Softmax of each of the 8 orbit variants (canonical order), then their arithmetic mean.
/// Throws Error(inference) naming `context` if any logit is non-finite.
ProbabilityVector tta_predict(const LogitFunction& logits, const Image& tensor,
                              const std::string& context = {});

/// tta_predict over several images, batching their orbits together.
std::vector<ProbabilityVector> tta_predict_batch(const LogitFunction& logits,
                                                 std::span<const Image> tensors,
                                                 const std::string& context = {});

struct PredictOptions {
    /// Images whose orbits share one forward pass (8 samples each).
    int images_per_batch = 4;
};

/// One row per test image, read from the tensor cache at config.target_resolution.
/// Every missing cache entry is listed in an Error(missing_prerequisite) before inference.
PredictionTable predict_dataset(const LogitFunction& logits, const std::string& source_id,
                                const DatasetManifest& manifest,
                                const std::filesystem::path& cache_root,
                                const PreprocessConfig& config, const PredictOptions& options = {});

}  // namespace skinres
