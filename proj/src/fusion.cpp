#include "skinres/fusion.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>

#include "skinres/error.hpp"

namespace skinres {

namespace {

// Neumaier's variant of Kahan summation.
struct CompensatedSum {
    double sum = 0.0;
    double carry = 0.0;

    void add(double v) {
        const double t = sum + v;
        if (std::abs(sum) >= std::abs(v)) carry += (sum - t) + v;
        else carry += (v - t) + sum;
        sum = t;
    }
    double value() const { return sum + carry; }
};

std::vector<std::string> symmetric_difference(const PredictionTable& a, const PredictionTable& b) {
    std::vector<std::string> out;
    auto ia = a.rows.begin();
    auto ib = b.rows.begin();
    while (ia != a.rows.end() || ib != b.rows.end()) {
        if (ib == b.rows.end() || (ia != a.rows.end() && ia->first < ib->first)) {
            out.push_back(ia++->first);
        } else if (ia == a.rows.end() || ib->first < ia->first) {
            out.push_back(ib++->first);
        } else {
            ++ia;
            ++ib;
        }
    }
    return out;
}

}  // namespace

std::string_view to_string(FusionLevel level) noexcept {
    switch (level) {
        case FusionLevel::L1: return "L1";
        case FusionLevel::L2: return "L2";
        case FusionLevel::L3: return "L3";
        case FusionLevel::single_res: return "single_res";
    }
    return "?";
}

std::string level1_id(Architecture arch, int resolution) {
    return fmt::format("L1/{}/{}", to_string(arch), resolution);
}
std::string level2_id(Architecture arch) { return fmt::format("L2/{}", to_string(arch)); }
std::string level3_id() { return "L3/final"; }
std::string single_resolution_id(int resolution) { return fmt::format("single/{}", resolution); }

PredictionTable average_tables(std::span<const PredictionTable> tables, std::string source_id) {
    if (tables.empty()) fail(ErrorKind::contract, "average_tables: no input tables");

    std::vector<const PredictionTable*> ordered;
    for (const auto& t : tables) ordered.push_back(&t);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const auto* a, const auto* b) { return a->source_id < b->source_id; });

    for (const auto* t : ordered) {
        const auto diff = symmetric_difference(*ordered.front(), *t);
        if (!diff.empty()) {
            fail(ErrorKind::fusion,
                 fmt::format("cannot fuse '{}' with '{}': image sets differ in {} id(s): {}",
                             ordered.front()->source_id, t->source_id, diff.size(),
                             fmt::join(diff, ", ")));
        }
    }

    PredictionTable out;
    out.source_id = std::move(source_id);
    const double n = static_cast<double>(ordered.size());
    for (const auto& [id, unused] : ordered.front()->rows) {
        std::array<CompensatedSum, kNumClasses> acc{};
        for (const auto* t : ordered) {
            const auto& p = t->rows.at(id);
            for (std::size_t c = 0; c < p.size(); ++c) acc[c].add(p[c]);
        }
        ProbabilityVector mean{};
        for (std::size_t c = 0; c < mean.size(); ++c) mean[c] = acc[c].value() / n;
        out.rows.emplace(id, mean);
    }
    return out;
}

FusionGraph::FusionGraph(ExperimentPlan plan) : plan_(std::move(plan)) {
    plan_.validate();
    auto add = [this](FusionNode node) {
        index_.emplace(node.node_id, nodes_.size());
        nodes_.push_back(std::move(node));
    };
    for (auto arch : plan_.architectures) {
        for (int r : plan_.resolutions) {
            FusionNode node{level1_id(arch, r), FusionLevel::L1, {}};
            for (const auto& cell : plan_.cells_for(arch, r)) node.children.push_back(cell.run_id());
            add(std::move(node));
        }
    }
    for (int r : plan_.resolutions) {
        FusionNode node{single_resolution_id(r), FusionLevel::single_res, {}};
        for (auto arch : plan_.architectures) node.children.push_back(level1_id(arch, r));
        add(std::move(node));
    }
    const auto fusion_res = plan_.fusion_resolutions();
    if (!fusion_res.empty()) {
        FusionNode final_node{level3_id(), FusionLevel::L3, {}};
        for (auto arch : plan_.architectures) {
            add(make_level2_node(arch, fusion_res));
            final_node.children.push_back(level2_id(arch));
        }
        add(std::move(final_node));
    }
}

const FusionNode& FusionGraph::node(const std::string& node_id) const {
    const auto it = index_.find(node_id);
    if (it == index_.end()) fail(ErrorKind::fusion, fmt::format("unknown fusion node '{}'", node_id));
    return nodes_[it->second];
}

std::size_t FusionGraph::leaf_run_count(const std::string& node_id) const {
    const auto& n = node(node_id);
    if (n.level == FusionLevel::L1) return n.children.size();
    std::size_t total = 0;
    for (const auto& child : n.children) total += leaf_run_count(child);
    return total;
}

std::vector<std::string> FusionGraph::node_ids(FusionLevel level) const {
    std::vector<std::string> out;
    for (const auto& n : nodes_) {
        if (n.level == level) out.push_back(n.node_id);
    }
    return out;
}

std::string FusionGraph::to_json() const {
    nlohmann::ordered_json doc;
    doc["fusion"] = "arithmetic_mean";
    auto& arr = doc["nodes"] = nlohmann::ordered_json::array();
    for (const auto& n : nodes_) {
        nlohmann::ordered_json j;
        j["id"] = n.node_id;
        j["level"] = to_string(n.level);
        j["children"] = n.children;
        j["leaf_runs"] = leaf_run_count(n.node_id);
        arr.push_back(std::move(j));
    }
    return doc.dump(2) + "\n";
}

FusionNode make_level2_node(Architecture arch, std::span<const int> resolutions) {
    FusionNode node{level2_id(arch), FusionLevel::L2, {}};
    for (int r : resolutions) {
        if (r == kExcludedFromFusion) {
            fail(ErrorKind::fusion, fmt::format("{}: {} px networks are excluded from multi-resolution fusion",
                                                node.node_id, kExcludedFromFusion));
        }
        node.children.push_back(level1_id(arch, r));
    }
    return node;
}

void validate_node(const FusionNode& node, const ExperimentPlan& plan) {
    if (node.children.empty()) fail(ErrorKind::fusion, fmt::format("{}: no children", node.node_id));
    std::size_t expected = 0;
    switch (node.level) {
        case FusionLevel::L1: expected = plan.optimizers.size() * plan.repeats.size(); break;
        case FusionLevel::L2: expected = plan.fusion_resolutions().size(); break;
        case FusionLevel::L3:
        case FusionLevel::single_res: expected = plan.architectures.size(); break;
    }
    if (node.children.size() != expected) {
        fail(ErrorKind::fusion, fmt::format("{} ({}): expected {} children, got {}", node.node_id,
                                            to_string(node.level), expected, node.children.size()));
    }
    if (node.level == FusionLevel::L2) {
        const auto excluded = fmt::format("/{}", kExcludedFromFusion);
        for (const auto& child : node.children) {
            if (child.ends_with(excluded)) {
                fail(ErrorKind::fusion, fmt::format("{}: child '{}' violates the {} px exclusion",
                                                    node.node_id, child, kExcludedFromFusion));
            }
        }
    }
    const std::set<std::string> unique(node.children.begin(), node.children.end());
    if (unique.size() != node.children.size()) {
        fail(ErrorKind::fusion, fmt::format("{}: duplicate children", node.node_id));
    }
}

PredictionTable fuse_node(const FusionNode& node, const ExperimentPlan& plan,
                          const std::filesystem::path& preds_dir) {
    validate_node(node, plan);
    std::vector<std::string> missing;
    for (const auto& child : node.children) {
        std::error_code ec;
        if (!std::filesystem::is_regular_file(prediction_path(preds_dir, child), ec)) missing.push_back(child);
    }
    if (!missing.empty()) {
        fail(ErrorKind::missing_prerequisite,
             fmt::format("{}: missing {} of {} children: {}", node.node_id, missing.size(),
                         node.children.size(), fmt::join(missing, ", ")));
    }
    std::vector<PredictionTable> tables;
    for (const auto& child : node.children) tables.push_back(load_prediction_table(preds_dir, child));
    auto fused = average_tables(tables, node.node_id);
    save_prediction_table(preds_dir, fused);
    return fused;
}

PredictionTable fuse_level1(Architecture arch, int resolution, const ExperimentPlan& plan,
                            const std::filesystem::path& preds_dir) {
    return fuse_node(FusionGraph(plan).node(level1_id(arch, resolution)), plan, preds_dir);
}

PredictionTable fuse_level2(Architecture arch, const ExperimentPlan& plan,
                            const std::filesystem::path& preds_dir) {
    return fuse_node(FusionGraph(plan).node(level2_id(arch)), plan, preds_dir);
}

PredictionTable fuse_level3(const ExperimentPlan& plan, const std::filesystem::path& preds_dir) {
    return fuse_node(FusionGraph(plan).node(level3_id()), plan, preds_dir);
}

PredictionTable fuse_single_resolution(int resolution, const ExperimentPlan& plan,
                                       const std::filesystem::path& preds_dir) {
    return fuse_node(FusionGraph(plan).node(single_resolution_id(resolution)), plan, preds_dir);
}

}  // namespace skinres
