#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "skinres/error.hpp"
#include "skinres/fusion.hpp"
#include "support.hpp"

using namespace skinres;
namespace fs = std::filesystem;
using testsupport::TempDir;

namespace {

double max_diff(const PredictionTable& a, const PredictionTable& b) {
    REQUIRE(a.rows.size() == b.rows.size());
    double worst = 0.0;
    for (const auto& [id, p] : a.rows) {
        const auto& q = b.rows.at(id);
        for (int c = 0; c < kNumClasses; ++c) worst = std::max(worst, std::abs(p[c] - q[c]));
    }
    return worst;
}

// Plain mean in long double, as an independent reference.
PredictionTable flat_mean(const std::vector<PredictionTable>& tables) {
    PredictionTable out;
    for (const auto& [id, p] : tables.front().rows) {
        std::array<long double, 3> acc{};
        for (const auto& t : tables)
            for (int c = 0; c < 3; ++c) acc[c] += t.rows.at(id)[c];
        ProbabilityVector v{};
        for (int c = 0; c < 3; ++c) v[c] = static_cast<double>(acc[c] / tables.size());
        out.rows[id] = v;
    }
    return out;
}

ExperimentPlan one_run_plan(std::vector<int> resolutions) {
    return {{kArchitectures.begin(), kArchitectures.end()}, std::move(resolutions), {OptimizerKind::SGDM}, {1}};
}

}  // namespace

TEST_CASE("hand-checkable means") {
    PredictionTable a{"a", {{"x", {1, 0, 0}}}}, b{"b", {{"x", {0, 1, 0}}}};
    const std::vector<PredictionTable> ab{a, b};
    const auto r = average_tables(ab, "ab");
    CHECK(r.rows.at("x") == ProbabilityVector{0.5, 0.5, 0.0});

    const std::vector<PredictionTable> three{{"p", {{"x", {0.2, 0.3, 0.5}}}},
                                             {"q", {{"x", {0.6, 0.3, 0.1}}}},
                                             {"r", {{"x", {0.1, 0.6, 0.3}}}}};
    const auto m = average_tables(three, "m").rows.at("x");
    CHECK(m[0] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(m[1] == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(m[2] == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("idempotence, permutation invariance and simplex preservation") {
    std::mt19937_64 rng(21);
    const auto t = testsupport::random_table(rng, "t", 40);
    const std::vector<PredictionTable> copies(5, t);
    CHECK(max_diff(average_tables(copies, "c"), t) <= 1e-15);

    std::vector<PredictionTable> tables;
    for (int i = 0; i < 7; ++i) tables.push_back(testsupport::random_table(rng, "s" + std::to_string(i), 40));
    const auto ref = average_tables(tables, "f");
    for (int trial = 0; trial < 10; ++trial) {
        std::shuffle(tables.begin(), tables.end(), rng);
        const auto again = average_tables(tables, "f");
        CHECK(again.rows == ref.rows);  // bit-identical
    }
    for (const auto& [id, p] : ref.rows) CHECK(on_simplex(p));
}

TEST_CASE("errors") {
    CHECK_THROWS_AS(average_tables({}, "x"), Error);
    PredictionTable a{"a", {{"x", {1, 0, 0}}, {"y", {1, 0, 0}}}}, b{"b", {{"x", {1, 0, 0}}, {"z", {1, 0, 0}}}};
    try {
        const std::vector<PredictionTable> ab{a, b};
        average_tables(ab, "ab");
        FAIL("mismatched tables fused");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::fusion);
        const std::string what = e.what();
        CHECK(what.find('y') != std::string::npos);
        CHECK(what.find('z') != std::string::npos);
    }
}

TEST_CASE("nested three-level mean equals the flat mean over 12 leaf tables") {
    std::mt19937_64 rng(33);
    const auto plan = one_run_plan({128, 224, 448, 768});
    const FusionGraph graph(plan);
    for (int trial = 0; trial < 20; ++trial) {
        TempDir dir("fusion");
        std::vector<PredictionTable> leaves;
        for (const auto& cell : plan.cells()) {
            leaves.push_back(testsupport::random_table(rng, cell.run_id(), 30));
            save_prediction_table(dir.path(), leaves.back());
        }
        REQUIRE(leaves.size() == 12);
        for (auto level : {FusionLevel::L1, FusionLevel::L2, FusionLevel::L3}) {
            for (const auto& id : graph.node_ids(level)) fuse_node(graph.node(id), plan, dir.path());
        }
        const auto nested = load_prediction_table(dir.path(), level3_id());
        CHECK(max_diff(nested, flat_mean(leaves)) <= 1e-9);
        CHECK(max_diff(fuse_level3(plan, dir.path()), nested) == 0.0);
    }
}

TEST_CASE("paper-shaped fusion graph") {
    const FusionGraph graph(ExperimentPlan::paper());
    CHECK(graph.leaf_run_count(level3_id()) == 108);
    CHECK(graph.node_ids(FusionLevel::L1).size() == 15);
    CHECK(graph.node_ids(FusionLevel::single_res).size() == 5);
    for (const auto& id : graph.node_ids(FusionLevel::L1)) CHECK(graph.node(id).children.size() == 9);
    for (const auto& id : graph.node_ids(FusionLevel::L2)) {
        const auto& n = graph.node(id);
        CHECK(n.children.size() == 4);
        for (const auto& c : n.children) CHECK(c.find("/64") == std::string::npos);
    }
    CHECK(graph.node(level3_id()).children.size() == 3);
    for (const auto& id : graph.node_ids(FusionLevel::single_res)) CHECK(graph.node(id).children.size() == 3);
    CHECK(graph.node(single_resolution_id(64)).children.front() == "L1/ResNet18/64");
}

TEST_CASE("64 px is refused at level 2") {
    const std::vector<int> with64{64, 128, 224, 448};
    try {
        make_level2_node(Architecture::ResNet50, with64);
        FAIL("64 px accepted at L2");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::fusion);
    }
    FusionNode forged{level2_id(Architecture::ResNet18), FusionLevel::L2,
                      {"L1/ResNet18/64", "L1/ResNet18/224", "L1/ResNet18/448", "L1/ResNet18/768"}};
    CHECK_THROWS_AS(validate_node(forged, ExperimentPlan::paper()), Error);
}

TEST_CASE("missing children are listed") {
    TempDir dir("fusion");
    std::mt19937_64 rng(8);
    const auto plan = ExperimentPlan::paper();
    const auto cells = plan.cells_for(Architecture::ResNet18, 128);
    for (std::size_t i = 0; i + 1 < cells.size(); ++i) {
        save_prediction_table(dir.path(), testsupport::random_table(rng, cells[i].run_id(), 5));
    }
    try {
        fuse_level1(Architecture::ResNet18, 128, plan, dir.path());
        FAIL("fused with a missing run");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::missing_prerequisite);
        CHECK(std::string(e.what()).find(cells.back().run_id()) != std::string::npos);
    }
    save_prediction_table(dir.path(), testsupport::random_table(rng, cells.back().run_id(), 5));
    const auto fused = fuse_level1(Architecture::ResNet18, 128, plan, dir.path());
    CHECK(fused.source_id == "L1/ResNet18/128");
    CHECK(fs::exists(dir / "L1/ResNet18/128.csv"));
}
