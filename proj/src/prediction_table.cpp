#include "skinres/prediction_table.hpp"

#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "skinres/error.hpp"
#include "skinres/fsutil.hpp"

namespace skinres {

bool on_simplex(const ProbabilityVector& p, double tolerance) noexcept {
    double sum = 0.0;
    for (double v : p) {
        if (!std::isfinite(v) || v < -tolerance || v > 1.0 + tolerance) return false;
        sum += v;
    }
    return std::abs(sum - 1.0) <= tolerance;
}

void PredictionTable::validate() const {
    for (const auto& [id, p] : rows) {
        if (!on_simplex(p)) {
            fail(ErrorKind::contract, fmt::format("table '{}': row '{}' is not a probability vector ({}, {}, {})",
                                                  source_id, id, p[0], p[1], p[2]));
        }
    }
}

std::string format_prediction_csv(const PredictionTable& table) {
    std::string out = "image_id,p_mm,p_sk,p_bn\n";
    for (const auto& [id, p] : table.rows) {
        out += fmt::format("{},{},{},{}\n", id, p[0], p[1], p[2]);
    }
    return out;
}

PredictionTable parse_prediction_csv(const std::string& text, std::string source_id) {
    PredictionTable table;
    table.source_id = std::move(source_id);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "image_id,p_mm,p_sk,p_bn") {
        fail(ErrorKind::schema, fmt::format("prediction table '{}': bad header", table.source_id));
    }
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string id;
        std::string cell;
        ProbabilityVector p{};
        bool ok = static_cast<bool>(std::getline(fields, id, ','));
        for (std::size_t c = 0; ok && c < p.size(); ++c) {
            ok = static_cast<bool>(std::getline(fields, cell, ','));
            if (!ok) break;
            try {
                std::size_t used = 0;
                p[c] = std::stod(cell, &used);
                ok = used == cell.size();
            } catch (const std::exception&) {
                ok = false;
            }
        }
        if (!ok || id.empty()) {
            fail(ErrorKind::schema, fmt::format("prediction table '{}': malformed row {}", table.source_id, line_no));
        }
        if (!table.rows.emplace(id, p).second) {
            fail(ErrorKind::schema, fmt::format("prediction table '{}': duplicate image_id '{}'", table.source_id, id));
        }
    }
    table.validate();
    return table;
}

std::filesystem::path prediction_path(const std::filesystem::path& preds_dir, const std::string& source_id) {
    return preds_dir / (source_id + ".csv");
}

bool save_prediction_table(const std::filesystem::path& preds_dir, const PredictionTable& table) {
    table.validate();
    return write_if_changed(prediction_path(preds_dir, table.source_id), format_prediction_csv(table));
}

PredictionTable load_prediction_table(const std::filesystem::path& preds_dir, const std::string& source_id) {
    const auto path = prediction_path(preds_dir, source_id);
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) {
        fail(ErrorKind::missing_prerequisite, fmt::format("prediction table '{}' not found at {}",
                                                          source_id, path.string()));
    }
    return parse_prediction_csv(read_file(path), source_id);
}

}  // namespace skinres
