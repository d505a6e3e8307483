#pragma once

#include <string>
#include <vector>

#include "skinres/kvconfig.hpp"
#include "skinres/types.hpp"

namespace skinres {

/// One training cell of the run matrix.
struct RunCell {
    Architecture architecture = Architecture::ResNet18;
    int resolution = 224;
    OptimizerKind optimizer = OptimizerKind::SGDM;
    int repeat = 1;

    /// e.g. "ResNet18_224_SGDM_r1"
    std::string run_id() const;

    friend bool operator==(const RunCell&, const RunCell&) = default;
};

/// The Cartesian product of the four matrix axes.
struct ExperimentPlan {
    std::vector<Architecture> architectures;
    std::vector<int> resolutions;
    std::vector<OptimizerKind> optimizers;
    std::vector<int> repeats;

    /// 3 architectures x 5 resolutions x 3 optimisers x 3 repeats.
    static ExperimentPlan paper();

    /// Reads the `[matrix]` section: architectures, resolutions, optimizers, repeats.
    /// Missing keys fall back to the paper axes. Throws Error(config) for unknown values.
    static ExperimentPlan from_config(const KeyValueConfig& config);

    /// Axes are non-empty, duplicate-free, and drawn from the supported sets.
    void validate() const;

    /// Every cell, ordered architecture-major, then resolution, optimiser, repeat.
    std::vector<RunCell> cells() const;
    /// Cells whose resolution takes part in multi-resolution fusion.
    std::vector<RunCell> ensemble_cells() const;
    std::vector<RunCell> cells_for(Architecture arch, int resolution) const;
    std::vector<int> fusion_resolutions() const;
};

}  // namespace skinres
