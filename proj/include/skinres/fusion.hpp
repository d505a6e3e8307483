#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "skinres/plan.hpp"
#include "skinres/prediction_table.hpp"

namespace skinres {

enum class FusionLevel { L1, L2, L3, single_res };

std::string_view to_string(FusionLevel level) noexcept;

struct FusionNode {
    std::string node_id;
    FusionLevel level = FusionLevel::L1;
    std::vector<std::string> children;  ///< run ids (L1) or node ids
};

/// Node id conventions: L1/<arch>/<R>, L2/<arch>, L3/final, single/<R>.
std::string level1_id(Architecture arch, int resolution);
std::string level2_id(Architecture arch);
std::string level3_id();
std::string single_resolution_id(int resolution);

/// Per-image arithmetic mean. Tables are summed in sorted source_id order with compensated
/// summation, so the result does not depend on input order.
/// Throws Error(contract) for an empty input and Error(fusion) when image sets differ.
PredictionTable average_tables(std::span<const PredictionTable> tables, std::string source_id);

/// The fusion tree implied by a run matrix.
class FusionGraph {
public:
    explicit FusionGraph(ExperimentPlan plan);

    const ExperimentPlan& plan() const noexcept { return plan_; }
    const std::vector<FusionNode>& nodes() const noexcept { return nodes_; }
    const FusionNode& node(const std::string& node_id) const;
    bool contains(const std::string& node_id) const { return index_.count(node_id) != 0; }

    /// Number of training runs transitively beneath a node.
    std::size_t leaf_run_count(const std::string& node_id) const;

    /// Level-ordered node ids (L1, single_res, L2, L3).
    std::vector<std::string> node_ids(FusionLevel level) const;

    /// JSON node tree written beside the fused tables.
    std::string to_json() const;

private:
    ExperimentPlan plan_;
    std::vector<FusionNode> nodes_;
    std::map<std::string, std::size_t> index_;
};

/// Builds an L2 node from explicit resolutions. Throws Error(fusion) if 64 px is requested.
FusionNode make_level2_node(Architecture arch, std::span<const int> resolutions);

/// Checks child cardinality against the plan (9 / 4 / 3 / 3 for the paper plan) and the
/// 64 px exclusion at L2. Throws Error(fusion).
void validate_node(const FusionNode& node, const ExperimentPlan& plan);

/// Loads children from `preds_dir`, averages, persists as <preds>/<node_id>.csv.
/// Missing children are listed in an Error(missing_prerequisite).
PredictionTable fuse_node(const FusionNode& node, const ExperimentPlan& plan,
                          const std::filesystem::path& preds_dir);

PredictionTable fuse_level1(Architecture arch, int resolution, const ExperimentPlan& plan,
                            const std::filesystem::path& preds_dir);
PredictionTable fuse_level2(Architecture arch, const ExperimentPlan& plan,
                            const std::filesystem::path& preds_dir);
PredictionTable fuse_level3(const ExperimentPlan& plan, const std::filesystem::path& preds_dir);
PredictionTable fuse_single_resolution(int resolution, const ExperimentPlan& plan,
                                       const std::filesystem::path& preds_dir);

}  // namespace skinres
