#include <doctest.h>

#include <set>

#include "skinres/error.hpp"
#include "skinres/fsutil.hpp"
#include "skinres/kvconfig.hpp"
#include "skinres/plan.hpp"
#include "skinres/prediction_table.hpp"
#include "support.hpp"

using namespace skinres;
using testsupport::TempDir;

TEST_CASE("paper plan has 135 cells, 108 in the ensemble") {
    const auto plan = ExperimentPlan::paper();
    const auto cells = plan.cells();
    CHECK(cells.size() == 135);
    CHECK(plan.ensemble_cells().size() == 108);
    std::set<std::string> ids;
    for (const auto& c : cells) ids.insert(c.run_id());
    CHECK(ids.size() == 135);
    CHECK(cells.front().run_id() == "ResNet18_64_SGDM_r1");
}

TEST_CASE("plan from a key-value config") {
    const auto cfg = KeyValueConfig::parse(R"(
        # toy matrix
        [matrix]
        architectures = [resnet-18, "DenseNet121"]
        resolutions = [64, 128]
        optimizers = [sgdm, ADAM]
        repeats = [1, 2]
    )");
    const auto plan = ExperimentPlan::from_config(cfg);
    const auto cells = plan.cells();
    CHECK(cells.size() == 16);
    std::set<std::string> ids;
    for (const auto& c : cells) ids.insert(c.run_id());
    CHECK(ids.size() == 16);
    CHECK(plan.fusion_resolutions() == std::vector<int>{128});

    const ExperimentPlan single{{Architecture::ResNet50}, {224}, {OptimizerKind::RMSProp}, {3}};
    CHECK(single.cells().size() == 1);

    CHECK_THROWS_AS(ExperimentPlan::from_config(KeyValueConfig::parse("[matrix]\nresolutions = [65]\n")), Error);
    CHECK_THROWS_AS(ExperimentPlan::from_config(KeyValueConfig::parse("[matrix]\noptimizers = [lbfgs]\n")), Error);
    CHECK_THROWS_AS(ExperimentPlan::from_config(KeyValueConfig::parse("[matrix]\nrepeats = [1, 1]\n")), Error);
}

TEST_CASE("key-value config values and layering") {
    auto base = KeyValueConfig::parse("[a]\nx = 1\ny = \"text # not a comment\"  # comment\nflag = true\n");
    CHECK(base.get_int("a.x", 0) == 1);
    CHECK(base.get_string("a.y", "") == "text # not a comment");
    CHECK(base.get_bool("a.flag", false));
    CHECK(base.get_double("a.missing", 2.5) == 2.5);
    base.merge(KeyValueConfig::parse("[a]\nx = 7\n"));
    CHECK(base.get_int("a.x", 0) == 7);
    CHECK_THROWS_AS(base.get_int("a.y", 0), Error);
    CHECK_THROWS_AS(KeyValueConfig::parse("[a\nx = 1\n"), Error);
}

TEST_CASE("prediction CSV round trip") {
    TempDir dir("preds");
    PredictionTable t{"ResNet18_64_SGDM_r1", {{"b", {0.1, 0.2, 0.7}}, {"a", {1.0 / 3, 1.0 / 3, 1.0 / 3}}}};
    const auto text = format_prediction_csv(t);
    CHECK(text.rfind("image_id,p_mm,p_sk,p_bn\na,", 0) == 0);
    CHECK(save_prediction_table(dir.path(), t));
    CHECK_FALSE(save_prediction_table(dir.path(), t));
    const auto back = load_prediction_table(dir.path(), t.source_id);
    CHECK(format_prediction_csv(back) == text);
    CHECK(back.rows.at("a")[0] == doctest::Approx(1.0 / 3).epsilon(1e-9));

    PredictionTable empty{"L3/final", {}};
    save_prediction_table(dir.path(), empty);
    CHECK(read_file(dir / "L3/final.csv") == "image_id,p_mm,p_sk,p_bn\n");

    try {
        load_prediction_table(dir.path(), "nothing");
        FAIL("missing table loaded");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::missing_prerequisite);
    }
    PredictionTable bad{"bad", {{"x", {0.5, 0.6, 0.1}}}};
    CHECK_THROWS_AS(bad.validate(), Error);
}
