#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>

#include "skinres/types.hpp"

namespace skinres {

/// (p_MM, p_SK, p_BN).
using ProbabilityVector = std::array<double, kNumClasses>;

inline constexpr double kSimplexTolerance = 1e-6;

/// Components in [0, 1] and summing to 1 within kSimplexTolerance.
bool on_simplex(const ProbabilityVector& p, double tolerance = kSimplexTolerance) noexcept;

struct PredictionTable {
    std::string source_id;  ///< run id or fusion node id
    std::map<std::string, ProbabilityVector> rows;

    /// Throws Error(contract) naming the first row that leaves the simplex.
    void validate() const;
};

/// CSV text: header `image_id,p_mm,p_sk,p_bn`, rows sorted by image_id, 9 significant digits.
std::string format_prediction_csv(const PredictionTable& table);
PredictionTable parse_prediction_csv(const std::string& text, std::string source_id);

/// <preds>/<source_id>.csv; node ids containing '/' become subdirectories.
std::filesystem::path prediction_path(const std::filesystem::path& preds_dir, const std::string& source_id);

/// Returns true if the file content changed.
bool save_prediction_table(const std::filesystem::path& preds_dir, const PredictionTable& table);
PredictionTable load_prediction_table(const std::filesystem::path& preds_dir, const std::string& source_id);

}  // namespace skinres
