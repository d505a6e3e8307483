#include "skinres/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>

#include "skinres/error.hpp"
#include "skinres/fsutil.hpp"

namespace skinres {

Label positive_label(BinaryTask task) noexcept {
    return task == BinaryTask::MM_vs_all ? Label::MM : Label::SK;
}

std::string_view to_string(BinaryTask task) noexcept {
    return task == BinaryTask::MM_vs_all ? "MM_vs_all" : "SK_vs_all";
}

double one_vs_all(const ProbabilityVector& p, BinaryTask task) noexcept {
    return p[static_cast<std::size_t>(positive_label(task))];
}

RocResult roc_auc(std::span<const double> scores, std::span<const bool> labels) {
    if (scores.size() != labels.size()) {
        fail(ErrorKind::contract, fmt::format("roc_auc: {} scores but {} labels", scores.size(), labels.size()));
    }
    const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
    const auto negatives = labels.size() - positives;
    if (positives == 0 || negatives == 0) {
        fail(ErrorKind::degenerate_input,
             fmt::format("roc_auc: need both classes, got {} positive and {} negative", positives, negatives));
    }
    for (double s : scores) {
        if (!std::isfinite(s)) fail(ErrorKind::contract, "roc_auc: non-finite score");
    }

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocResult result;
    result.curve.points.push_back({0.0, 0.0});
    result.curve.thresholds.push_back(std::numeric_limits<double>::infinity());

    const double p = static_cast<double>(positives);
    const double n = static_cast<double>(negatives);
    double tp = 0.0;
    double fp = 0.0;
    double area = 0.0;  // in units of (positive, negative) pairs
    std::size_t i = 0;
    while (i < order.size()) {
        const double cutoff = scores[order[i]];
        const double tp_before = tp;
        const double fp_before = fp;
        for (; i < order.size() && scores[order[i]] == cutoff; ++i) {
            if (labels[order[i]]) tp += 1.0;
            else fp += 1.0;
        }
        area += (fp - fp_before) * (tp + tp_before) / 2.0;
        result.curve.points.push_back({fp / n, tp / p});
        result.curve.thresholds.push_back(cutoff);
    }
    result.auc = area / (p * n);
    return result;
}

EvalReport evaluate_table(const PredictionTable& table, const DatasetManifest& manifest) {
    const auto test = manifest.split_records(Split::test);
    std::vector<std::string> missing;
    for (const auto& r : test) {
        if (!table.rows.count(r.image_id)) missing.push_back(r.image_id);
    }
    std::vector<std::string> extra;
    for (const auto& [id, p] : table.rows) {
        const auto* rec = manifest.find(id);
        if (rec == nullptr || rec->split != Split::test) extra.push_back(id);
    }
    if (!missing.empty() || !extra.empty()) {
        fail(ErrorKind::contract,
             fmt::format("table '{}' does not match the test split: missing [{}], unexpected [{}]",
                         table.source_id, fmt::join(missing, ", "), fmt::join(extra, ", ")));
    }

    EvalReport report;
    report.source_id = table.source_id;
    report.test_size = test.size();
    for (auto task : kBinaryTasks) {
        std::vector<double> scores;
        auto truth = std::make_unique<bool[]>(test.size());
        for (std::size_t i = 0; i < test.size(); ++i) {
            scores.push_back(one_vs_all(table.rows.at(test[i].image_id), task));
            truth[i] = test[i].label == positive_label(task);
        }
        const auto roc = roc_auc(scores, std::span<const bool>(truth.get(), test.size()));
        if (task == BinaryTask::MM_vs_all) {
            report.auc_mm = roc.auc;
            report.curve_mm = roc.curve;
        } else {
            report.auc_sk = roc.auc;
            report.curve_sk = roc.curve;
        }
    }
    report.auc_avg = (report.auc_mm + report.auc_sk) / 2.0;
    return report;
}

std::map<std::string, Label> argmax_classify(const PredictionTable& table) {
    std::map<std::string, Label> out;
    for (const auto& [id, p] : table.rows) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < p.size(); ++c) {
            if (p[c] > p[best]) best = c;
        }
        out.emplace(id, kLabels[best]);
    }
    return out;
}

std::map<BinaryTask, ExemplarLists> exemplar_lists(const PredictionTable& table,
                                                   const DatasetManifest& manifest) {
    const auto predicted = argmax_classify(table);
    std::map<BinaryTask, ExemplarLists> out;
    for (auto task : kBinaryTasks) {
        auto& lists = out[task];
        const auto pos = positive_label(task);
        for (const auto& r : manifest.split_records(Split::test)) {
            const auto it = predicted.find(r.image_id);
            if (it == predicted.end()) continue;
            const bool agrees = (it->second == pos) == (r.label == pos);
            (agrees ? lists.correct : lists.incorrect).push_back(r.image_id);
        }
    }
    return out;
}

std::vector<ResultRow> published_baselines() {
    // ISIC 2017 challenge winners, then later methods on the same test set. AUC [%].
    return {
        {"Matsunaga et al.", "n/a", 86.8, 95.3, 91.1, 1},
        {"Gonzalez-Diaz", "256x256", 85.6, 96.5, 91.0, 1},
        {"Menegola et al.", "128x128", 87.4, 94.3, 90.8, 1},
        {"Mahbod et al.", "224x224", 87.3, 95.5, 91.4, 1},
        {"Zhang et al.", "224x224", 87.5, 95.8, 91.7, 1},
        {"Yan et al.", "256x256", 88.3, std::nullopt, std::nullopt, 1},
        {"Guo et al.", "224x224", 87.4, 95.9, 91.7, 1},
        {"three-level fusion (published)", "multiple", 89.2, 96.6, 92.9, 1},
    };
}

std::vector<ResultRow> comparison_report(const EvalReport& report) {
    auto rows = published_baselines();
    rows.push_back({fmt::format("this run ({})", report.source_id), "multiple", report.auc_mm * 100.0,
                    report.auc_sk * 100.0, report.auc_avg * 100.0, 2});
    return rows;
}

std::string format_percent(std::optional<double> percent, int decimals) {
    if (!percent) return "n/a";
    return fmt::format("{:.{}f}", *percent, decimals);
}

std::string render_text_table(const std::string& title, std::span<const ResultRow> rows) {
    std::size_t w0 = std::string_view("approach").size();
    std::size_t w1 = std::string_view("input size").size();
    for (const auto& r : rows) {
        w0 = std::max(w0, r.approach.size());
        w1 = std::max(w1, r.input_size.size());
    }
    std::string out = title + "\n";
    const auto rule = std::string(w0 + w1 + 3 * 8 + 4, '-') + "\n";
    out += rule;
    out += fmt::format("{:<{}}  {:<{}}  {:>6}  {:>6}  {:>6}\n", "approach", w0, "input size", w1, "MM", "SK", "avg.");
    out += rule;
    for (const auto& r : rows) {
        out += fmt::format("{:<{}}  {:<{}}  {:>6}  {:>6}  {:>6}\n", r.approach, w0, r.input_size, w1,
                           format_percent(r.mm, r.decimals), format_percent(r.sk, r.decimals),
                           format_percent(r.avg, r.decimals));
    }
    out += rule;
    return out;
}

std::string report_to_json(const EvalReport& report, bool include_curves) {
    nlohmann::ordered_json j;
    j["source_id"] = report.source_id;
    j["test_size"] = report.test_size;
    j["auc"] = {{"MM", report.auc_mm}, {"SK", report.auc_sk}, {"avg", report.auc_avg}};
    if (include_curves) {
        auto curve_json = [](const RocCurve& c) {
            nlohmann::ordered_json pts = nlohmann::ordered_json::array();
            for (std::size_t i = 0; i < c.points.size(); ++i) {
                const double t = c.thresholds[i];
                pts.push_back({{"fpr", c.points[i].fpr},
                               {"tpr", c.points[i].tpr},
                               {"threshold", std::isinf(t) ? nlohmann::ordered_json("inf") : nlohmann::ordered_json(t)}});
            }
            return pts;
        };
        j["roc"] = {{"MM_vs_all", curve_json(report.curve_mm)}, {"SK_vs_all", curve_json(report.curve_sk)}};
    }
    return j.dump(2) + "\n";
}

std::string render_roc_svg(const EvalReport& report) {
    constexpr double kSize = 400.0;
    constexpr double kMargin = 50.0;
    auto px = [&](double fpr) { return kMargin + fpr * kSize; };
    auto py = [&](double tpr) { return kMargin + (1.0 - tpr) * kSize; };
    auto polyline = [&](const RocCurve& c, std::string_view colour) {
        std::string pts;
        for (const auto& p : c.points) pts += fmt::format("{:.3f},{:.3f} ", px(p.fpr), py(p.tpr));
        if (!pts.empty()) pts.pop_back();
        return fmt::format("  <polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n", colour, pts);
    };

    std::string svg;
    svg += fmt::format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{0}\" viewBox=\"0 0 {0} {0}\">\n",
                       kSize + 2 * kMargin);
    svg += "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += fmt::format("  <rect x=\"{0}\" y=\"{0}\" width=\"{1}\" height=\"{1}\" fill=\"none\" stroke=\"black\"/>\n",
                       kMargin, kSize);
    for (int i = 0; i <= 10; ++i) {
        const double v = i / 10.0;
        svg += fmt::format("  <text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"10\" text-anchor=\"middle\">{:.1f}</text>\n",
                           px(v), kMargin + kSize + 15, v);
        svg += fmt::format("  <text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"10\" text-anchor=\"end\">{:.1f}</text>\n",
                           kMargin - 5, py(v) + 3, v);
    }
    svg += fmt::format("  <line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n",
                       px(0), py(0), px(1), py(1));
    svg += polyline(report.curve_mm, "#c0392b");
    svg += polyline(report.curve_sk, "#2471a3");
    svg += fmt::format("  <text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"12\" text-anchor=\"middle\">false positive rate</text>\n",
                       kMargin + kSize / 2, kMargin + kSize + 35);
    svg += fmt::format("  <text x=\"15\" y=\"{:.1f}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 15 {:.1f})\">true positive rate</text>\n",
                       kMargin + kSize / 2, kMargin + kSize / 2);
    svg += fmt::format("  <text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"13\" text-anchor=\"middle\">ROC: {}</text>\n",
                       kMargin + kSize / 2, kMargin - 20, report.source_id);
    svg += fmt::format("  <text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"12\" fill=\"#c0392b\">MM vs all (AUC = {:.4f})</text>\n",
                       px(0.45), py(0.12), report.auc_mm);
    svg += fmt::format("  <text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"12\" fill=\"#2471a3\">SK vs all (AUC = {:.4f})</text>\n",
                       px(0.45), py(0.05), report.auc_sk);
    svg += "</svg>\n";
    return svg;
}

bool emit_roc_plot(const EvalReport& report, const std::filesystem::path& path) {
    return write_if_changed(path, render_roc_svg(report));
}

}  // namespace skinres
