#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "skinres/catalog.hpp"
#include "skinres/prediction_table.hpp"

namespace skinres {

enum class BinaryTask { MM_vs_all, SK_vs_all };
inline constexpr std::array<BinaryTask, 2> kBinaryTasks{BinaryTask::MM_vs_all, BinaryTask::SK_vs_all};

Label positive_label(BinaryTask task) noexcept;
std::string_view to_string(BinaryTask task) noexcept;

/// Probability of the task's positive class.
double one_vs_all(const ProbabilityVector& p, BinaryTask task) noexcept;

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
};

struct RocCurve {
    std::vector<RocPoint> points;  ///< starts at (0,0), ends at (1,1)
    /// thresholds[i] is the cutoff producing points[i] (score >= cutoff is positive);
    /// thresholds[0] is +infinity.
    std::vector<double> thresholds;
};

struct RocResult {
    RocCurve curve;
    double auc = 0.0;
};

/// ROC from one threshold per distinct score, AUC by the trapezoidal rule (tied scores
/// contribute half credit). Throws Error(degenerate_input) unless both classes occur.
RocResult roc_auc(std::span<const double> scores, std::span<const bool> labels);

struct EvalReport {
    std::string source_id;
    double auc_mm = 0.0;
    double auc_sk = 0.0;
    double auc_avg = 0.0;
    RocCurve curve_mm;
    RocCurve curve_sk;
    std::size_t test_size = 0;
};

/// Scores both binary tasks on the manifest's test split. Throws Error(contract) listing ids
/// when the table does not cover exactly the test split.
EvalReport evaluate_table(const PredictionTable& table, const DatasetManifest& manifest);

/// Label with the largest probability; exact ties resolve MM, then SK, then BN.
std::map<std::string, Label> argmax_classify(const PredictionTable& table);

struct ExemplarLists {
    std::vector<std::string> correct;
    std::vector<std::string> incorrect;
};

/// Per binary task, test ids split by whether the argmax decision (positive class or not)
/// agrees with the ground truth.
std::map<BinaryTask, ExemplarLists> exemplar_lists(const PredictionTable& table,
                                                   const DatasetManifest& manifest);

/// One row of a `MM SK avg.` results table. Values are AUC percentages; absent
/// cells render as n/a.
struct ResultRow {
    std::string approach;
    std::string input_size;
    std::optional<double> mm;
    std::optional<double> sk;
    std::optional<double> avg;
    /// Decimals shown for the percentage cells.
    int decimals = 2;
};

/// Published ISIC 2017 comparison rows, in percent as printed (one decimal).
std::vector<ResultRow> published_baselines();

/// Baselines followed by our row (two decimals).
std::vector<ResultRow> comparison_report(const EvalReport& report);

/// "86.8", "89.16", or "n/a" for a percentage.
std::string format_percent(std::optional<double> percent, int decimals);

/// Fixed-width text table with columns approach | input size | MM | SK | avg.
std::string render_text_table(const std::string& title, std::span<const ResultRow> rows);

std::string report_to_json(const EvalReport& report, bool include_curves = true);

/// Deterministic SVG with both task curves, the chance diagonal, and an AUC legend.
std::string render_roc_svg(const EvalReport& report);
/// Writes render_roc_svg output; returns true if the file changed.
bool emit_roc_plot(const EvalReport& report, const std::filesystem::path& path);

}  // namespace skinres
