#include "skinres/plan.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "skinres/error.hpp"

namespace skinres {

namespace {

template <typename T>
void require_unique(const std::vector<T>& axis, const char* name) {
    if (axis.empty()) fail(ErrorKind::config, fmt::format("matrix axis '{}' is empty", name));
    std::set<T> seen(axis.begin(), axis.end());
    if (seen.size() != axis.size()) {
        fail(ErrorKind::config, fmt::format("matrix axis '{}' has duplicate entries", name));
    }
}

int parse_int(const std::string& s, const char* axis) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(s, &used);
        if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    fail(ErrorKind::config, fmt::format("matrix axis '{}': '{}' is not an integer", axis, s));
}

}  // namespace

std::string RunCell::run_id() const {
    return fmt::format("{}_{}_{}_r{}", to_string(architecture), resolution, to_string(optimizer), repeat);
}

ExperimentPlan ExperimentPlan::paper() {
    return {{kArchitectures.begin(), kArchitectures.end()},
            {kSupportedResolutions.begin(), kSupportedResolutions.end()},
            {kOptimizers.begin(), kOptimizers.end()},
            {1, 2, 3}};
}

ExperimentPlan ExperimentPlan::from_config(const KeyValueConfig& config) {
    ExperimentPlan plan = paper();
    if (const auto v = config.find_list("matrix.architectures")) {
        plan.architectures.clear();
        for (const auto& s : *v) {
            const auto a = parse_architecture(s);
            if (!a) fail(ErrorKind::config, fmt::format("unknown architecture '{}'", s));
            plan.architectures.push_back(*a);
        }
    }
    if (const auto v = config.find_list("matrix.resolutions")) {
        plan.resolutions.clear();
        for (const auto& s : *v) plan.resolutions.push_back(parse_int(s, "resolutions"));
    }
    if (const auto v = config.find_list("matrix.optimizers")) {
        plan.optimizers.clear();
        for (const auto& s : *v) {
            const auto o = parse_optimizer(s);
            if (!o) fail(ErrorKind::config, fmt::format("unknown optimiser '{}'", s));
            plan.optimizers.push_back(*o);
        }
    }
    if (const auto v = config.find_list("matrix.repeats")) {
        plan.repeats.clear();
        for (const auto& s : *v) plan.repeats.push_back(parse_int(s, "repeats"));
    }
    plan.validate();
    return plan;
}

void ExperimentPlan::validate() const {
    require_unique(architectures, "architectures");
    require_unique(resolutions, "resolutions");
    require_unique(optimizers, "optimizers");
    require_unique(repeats, "repeats");
    for (int r : resolutions) {
        if (!is_supported_resolution(r)) fail(ErrorKind::config, fmt::format("unsupported resolution {}", r));
    }
    for (int r : repeats) {
        if (r < 1) fail(ErrorKind::config, fmt::format("repeat index must be >= 1, got {}", r));
    }
}

std::vector<RunCell> ExperimentPlan::cells() const {
    std::vector<RunCell> out;
    for (auto a : architectures)
        for (int r : resolutions)
            for (auto o : optimizers)
                for (int k : repeats) out.push_back({a, r, o, k});
    return out;
}

std::vector<RunCell> ExperimentPlan::ensemble_cells() const {
    auto all = cells();
    std::erase_if(all, [](const RunCell& c) { return c.resolution == kExcludedFromFusion; });
    return all;
}

std::vector<RunCell> ExperimentPlan::cells_for(Architecture arch, int resolution) const {
    std::vector<RunCell> out;
    for (auto o : optimizers)
        for (int k : repeats) out.push_back({arch, resolution, o, k});
    return out;
}

std::vector<int> ExperimentPlan::fusion_resolutions() const {
    std::vector<int> out;
    for (int r : resolutions) {
        if (r != kExcludedFromFusion) out.push_back(r);
    }
    return out;
}

}  // namespace skinres
