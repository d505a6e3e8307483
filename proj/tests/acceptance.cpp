// Acceptance gate: one PASS/FAIL line per criterion, each with its runtime budget.
// Usage: acceptance [name...]   (no arguments runs every criterion)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <regex>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <torch/torch.h>

#include "skinres/augment.hpp"
#include "skinres/error.hpp"
#include "skinres/evaluator.hpp"
#include "skinres/fsutil.hpp"
#include "skinres/fusion.hpp"
#include "skinres/kvconfig.hpp"
#include "skinres/predictor.hpp"
#include "skinres/preprocess.hpp"
#include "skinres/trainer.hpp"
#include "golden/bicubic_golden.inc"
#include "support.hpp"

using namespace skinres;
using testsupport::TempDir;
namespace fs = std::filesystem;

namespace {

// Collects failed expectations and a few measured values for the report line.
class Checks {
public:
    void expect(bool ok, const std::string& what) {
        ++total_;
        if (!ok && failures_.size() < 4) failures_.push_back(what);
        failed_ += ok ? 0 : 1;
    }
    void note(const std::string& text) { notes_.push_back(text); }
    bool ok() const { return failed_ == 0; }
    std::string summary() const {
        std::string s = fmt::format("{}/{} checks", total_ - failed_, total_);
        for (const auto& n : notes_) s += "; " + n;
        for (const auto& f : failures_) s += "; FAILED " + f;
        return s;
    }

private:
    int total_ = 0;
    int failed_ = 0;
    std::vector<std::string> failures_;
    std::vector<std::string> notes_;
};

double rel_diff(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

double max_rel_diff(const Image& a, const Image& b) {
    double d = 0;
    for (std::size_t i = 0; i < a.values().size(); ++i) d = std::max(d, rel_diff(a.values()[i], b.values()[i]));
    return d;
}

std::array<double, 3> channel_means(const Image& img) {
    std::array<double, 3> m{};
    for (int c = 0; c < 3; ++c) {
        for (float v : img.plane(c)) m[c] += v;
        m[c] /= static_cast<double>(img.plane_size());
    }
    return m;
}

// ---------------------------------------------------------------------------------------

void preprocess_suite(Checks& c) {
    std::mt19937_64 rng(101);
    double worst_means = 0, worst_scale = 0, worst_idem = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const auto x = testsupport::random_image(rng, 3, 24 + trial % 7, 30 + trial % 5, 1.0f, 255.0f);
        const auto g = grayworld(x);
        const auto m = channel_means(g);
        worst_means = std::max({worst_means, rel_diff(m[0], m[1]), rel_diff(m[1], m[2])});
        Image scaled = x;
        for (auto& v : scaled.values()) v *= 3.5f;
        Image g_scaled_expected = g;
        for (auto& v : g_scaled_expected.values()) v *= 3.5f;
        worst_scale = std::max(worst_scale, max_rel_diff(grayworld(scaled), g_scaled_expected));
        worst_idem = std::max(worst_idem, max_rel_diff(grayworld(g), g));
    }
    c.expect(worst_means <= 1e-6, fmt::format("equal channel means (rel {:.2e})", worst_means));
    c.expect(worst_scale <= 1e-6, fmt::format("scale equivariance (rel {:.2e})", worst_scale));
    c.expect(worst_idem <= 1e-6, fmt::format("idempotence (rel {:.2e})", worst_idem));
    c.note(fmt::format("grayworld worst rel {:.1e}", std::max({worst_means, worst_scale, worst_idem})));

    PreprocessConfig cfg;
    for (int r : kSupportedResolutions) {
        cfg.target_resolution = r;
        const auto x = testsupport::random_image(rng, 3, 70, 90, 1.0f, 255.0f);
        const auto composed = resize_bicubic(subtract_mean(grayworld(x), cfg.mean_rgb), r);
        c.expect(preprocess_image(x, cfg) == composed, fmt::format("composition order at {} px", r));
    }

    double worst_golden = 0;
    auto golden = [&](const float* in, int h, int w, const float* out, int target) {
        const auto got = resize_bicubic(Image(3, h, w, std::vector<float>(in, in + 3 * h * w)), target);
        for (std::size_t i = 0; i < got.values().size(); ++i)
            worst_golden = std::max(worst_golden, static_cast<double>(std::abs(got.values()[i] - out[i])));
    };
    golden(k_checker8x8_to16_in, 8, 8, k_checker8x8_to16_out, 16);
    golden(k_checker8x6_to16_in, 6, 8, k_checker8x6_to16_out, 16);
    golden(k_checker5x7_to12_in, 7, 5, k_checker5x7_to12_out, 12);
    c.expect(worst_golden <= 1e-3, fmt::format("bicubic golden files (max abs {:.2e})", worst_golden));
    c.note(fmt::format("golden max abs {:.1e}", worst_golden));
}

// ---------------------------------------------------------------------------------------

// Mirror columns, then rotate counter-clockwise, straight from pixel coordinates.
Image oracle_apply(const DihedralElement& g, const Image& in) {
    const int n = in.width();
    Image cur = in;
    if (g.hflip) {
        Image t(3, n, n);
        for (int ch = 0; ch < 3; ++ch)
            for (int y = 0; y < n; ++y)
                for (int x = 0; x < n; ++x) t.at(ch, y, x) = cur.at(ch, y, n - 1 - x);
        cur = t;
    }
    for (int k = 0; k < g.quarter_turns; ++k) {
        Image t(3, n, n);
        for (int ch = 0; ch < 3; ++ch)
            for (int y = 0; y < n; ++y)
                for (int x = 0; x < n; ++x) t.at(ch, y, x) = cur.at(ch, x, n - 1 - y);
        cur = t;
    }
    return cur;
}

std::multiset<std::vector<float>> as_multiset(const std::vector<Image>& images) {
    std::multiset<std::vector<float>> s;
    for (const auto& i : images) s.emplace(i.values().begin(), i.values().end());
    return s;
}

void augment_suite(Checks& c) {
    Image x(3, 6, 6);
    float v = 0;
    for (auto& p : x.values()) p = v++;

    const auto o = orbit(x);
    c.expect(o.size() == 8, "orbit size 8");
    std::set<std::vector<float>> distinct;
    for (const auto& i : o) distinct.emplace(i.values().begin(), i.values().end());
    c.expect(distinct.size() == 8, "orbit elements distinct");

    const auto& g = dihedral_elements();
    for (std::size_t k = 0; k < g.size(); ++k) c.expect(apply(g[k], x) == oracle_apply(g[k], x), "apply matches oracle " + g[k].name());

    int closed = 0;
    for (const auto& a : g) {
        for (const auto& b : g) {
            const auto k = compose(a, b);
            const bool in_group = std::find(g.begin(), g.end(), k) != g.end();
            closed += in_group && apply(k, x) == apply(a, apply(b, x)) ? 1 : 0;
        }
    }
    c.expect(closed == 64, fmt::format("closure {}/64", closed));

    std::mt19937_64 rng(7);
    const auto y = testsupport::random_image(rng, 3, 16, 16);
    auto sorted = [](const Image& i) {
        std::vector<float> s(i.values().begin(), i.values().end());
        std::sort(s.begin(), s.end());
        return s;
    };
    const auto base = as_multiset(orbit(y));
    for (const auto& e : g) {
        c.expect(sorted(apply(e, y)) == sorted(y), "lossless " + e.name());
        c.expect(as_multiset(orbit(apply(e, y))) == base, "orbit invariant under " + e.name());
    }
    c.note("64 compositions closed");
}

// ---------------------------------------------------------------------------------------

void model_suite(Checks& c) {
    torch::manual_seed(0);
    int grid_ok = 0;
    for (auto arch : kArchitectures) {
        ModelOptions o;
        o.seed = 1;
        auto model = build_model({arch, false}, o, nullptr);
        for (int r : kSupportedResolutions) {
            const auto logits = forward_logits(model, torch::randn({2, 3, r, r}));
            const bool ok = logits.sizes() == torch::IntArrayRef{2, 3} && torch::isfinite(logits).all().item<bool>();
            c.expect(ok, fmt::format("{} at {} px gives (2,3)", to_string(arch), r));
            grid_ok += ok ? 1 : 0;
        }

        // One optimiser step over every parameter, frozen ones included.
        model->train(true);
        std::vector<torch::Tensor> all;
        std::map<std::string, torch::Tensor> before;
        for (const auto& item : model->named_parameters()) {
            all.push_back(item.value());
            before[item.key()] = item.value().detach().clone();
        }
        torch::optim::SGD opt(all, torch::optim::SGDOptions(0.1).momentum(0.9));
        opt.zero_grad();
        model->forward(torch::randn({2, 3, 64, 64})).logsumexp(1).sum().backward();
        opt.step();
        bool frozen_ok = true, moved = false;
        std::int64_t frozen_count = 0;
        const auto params = model->named_parameters();
        for (const auto& e : model->partition_report().parameters) {
            const auto& p = params[e.name];
            if (e.partition == Partition::frozen) {
                ++frozen_count;
                const bool zero_grad = !p.grad().defined() || p.grad().abs().max().item<float>() == 0.0f;
                frozen_ok = frozen_ok && zero_grad && torch::equal(p, before.at(e.name));
            } else if (e.partition == Partition::head) {
                moved = moved || !torch::equal(p, before.at(e.name));
            }
        }
        c.expect(frozen_count > 0 && frozen_ok, fmt::format("{} frozen weights untouched by a step", to_string(arch)));
        c.expect(moved, fmt::format("{} head moved", to_string(arch)));
    }
    c.note(fmt::format("grid {}/15", grid_ok));

    ModelOptions defaults;
    defaults.seed = 42;
    auto m = build_model({Architecture::ResNet18, false}, defaults, nullptr);
    const auto w = m->head_hidden()->weight.detach().to(torch::kFloat64);
    const double sd = w.std().item<double>();
    c.expect(w.numel() >= 10000, fmt::format("head sample size {}", w.numel()));
    c.expect(sd >= 0.9 && sd <= 1.1, fmt::format("head init std {:.4f}", sd));
    c.note(fmt::format("head std {:.4f} over {} weights", sd, w.numel()));
}

// ---------------------------------------------------------------------------------------

void trainer_suite(Checks& c) {
    for (auto kind : {OptimizerKind::SGDM, OptimizerKind::RMSProp, OptimizerKind::Adam}) {
        TrainConfig cfg;
        cfg.optimizer = OptimizerSpec::defaults(kind);
        const double lr0 = cfg.optimizer.base_lr;
        bool table_ok = true;
        for (int e = 1; e <= 15; ++e) {
            const double want = e <= 5 ? lr0 : e <= 10 ? lr0 / 10 : lr0 / 100;
            const auto lr = lr_at_epoch(cfg, e);
            table_ok = table_ok && rel_diff(lr.backbone / want, 1.0) <= 1e-12 && rel_diff(lr.head / lr.backbone, 10.0) <= 1e-12;
        }
        c.expect(table_ok, fmt::format("{} learning rate table", to_string(kind)));
    }

    const auto manifest = load_manifest(testsupport::toy_manifest());
    c.expect(manifest.size(Split::train) >= 150, fmt::format("toy training set size {}", manifest.size(Split::train)));
    TempDir dir("accept_train");
    auto defaults = TrainingDefaults::from_config(KeyValueConfig::load(testsupport::source_dir() / "configs" / "toy.cfg"));
    defaults.epochs = 15;
    defaults.lr_drop_epochs = {5, 10};
    TrainingSet data{&manifest, dir / "cache", {}};
    data.preprocess.target_resolution = 64;
    materialize_cache(manifest, data.preprocess, data.cache_root);

    for (auto kind : {OptimizerKind::SGDM, OptimizerKind::RMSProp, OptimizerKind::Adam}) {
        const auto cfg = make_train_config({Architecture::ResNet18, 64, kind, 1}, defaults);
        const auto result = train_run(cfg, data, nullptr, dir / cfg.run_id());
        if (!result.completed || result.epoch_losses.empty()) {
            c.expect(false, fmt::format("{} training ({})", to_string(kind), result.error));
            continue;
        }
        const double ratio = result.epoch_losses.back() / result.epoch_losses.front();
        c.expect(ratio < 0.5, fmt::format("{} loss ratio {:.3f}", to_string(kind), ratio));
        c.note(fmt::format("{} {:.3f}->{:.3f}", to_string(kind), result.epoch_losses.front(), result.epoch_losses.back()));
    }
}

// ---------------------------------------------------------------------------------------

torch::Tensor corner_logits(const torch::Tensor& batch) {
    using torch::indexing::Slice;
    const auto r = batch.size(2);
    return torch::stack({batch.index({Slice(), 0, 0, 0}), batch.index({Slice(), 1, 0, r - 1}) * 0.5,
                         batch.index({Slice(), 2, r - 1, 0}) * -0.25},
                        1);
}

std::array<double, 3> softmax3(std::array<double, 3> z) {
    const double m = std::max({z[0], z[1], z[2]});
    double s = 0;
    for (auto& v : z) s += (v = std::exp(v - m));
    for (auto& v : z) v /= s;
    return z;
}

// The stub's logits for one image, straight from its pixels.
std::array<double, 3> stub_logits(const Image& img) {
    const int r = img.width();
    return {img.at(0, 0, 0), 0.5 * img.at(1, 0, r - 1), -0.25 * img.at(2, r - 1, 0)};
}

void tta_suite(Checks& c) {
    std::mt19937_64 rng(55);
    ModelOptions o;
    o.seed = 5;
    o.head_init_std = 0.05;
    auto model = build_model({Architecture::ResNet18, false}, o, nullptr);
    // Calibrated statistics keep the logits moderate, so single views genuinely disagree.
    model->calibrate_batch_norm({torch::rand({16, 3, 64, 64}) * 240 - 120});
    const auto fn = model_logits(model);
    double worst_inv = 0, worst_simplex = 0, spread = 0;
    for (int trial = 0; trial < 3; ++trial) {
        const auto x = testsupport::random_image(rng, 3, 64, 64, -120, 120);
        const auto base = tta_predict(fn, x);
        // How far single-variant predictions stray from the average: invariance is not vacuous.
        for (const auto& v : orbit(x)) {
            const auto p = fn(torch::from_blob(const_cast<float*>(v.values().data()), {1, 3, 64, 64}).clone())
                               .softmax(1).to(torch::kFloat64);
            for (int k = 0; k < 3; ++k) spread = std::max(spread, std::abs(p[0][k].item<double>() - base[k]));
        }
        for (const auto& g : dihedral_elements()) {
            const auto p = tta_predict(fn, apply(g, x));
            for (int k = 0; k < 3; ++k) worst_inv = std::max(worst_inv, std::abs(p[k] - base[k]));
            worst_simplex = std::max(worst_simplex, std::abs(p[0] + p[1] + p[2] - 1.0));
            c.expect(*std::min_element(p.begin(), p.end()) >= 0.0, "non-negative probabilities");
        }
    }
    c.expect(worst_inv <= 1e-5, fmt::format("dihedral invariance (max {:.2e})", worst_inv));
    c.expect(spread > 1e-4, fmt::format("single views differ from the average (spread {:.2e})", spread));

    double worst_stub = 0, min_gap = 1;
    for (int trial = 0; trial < 20; ++trial) {
        const auto x = testsupport::random_image(rng, 3, 64, 64, -3, 3);
        const auto p = tta_predict(corner_logits, x);
        std::array<double, 3> after{}, mean_z{};
        for (const auto& v : orbit(x)) {
            const auto z = stub_logits(v);
            const auto q = softmax3(z);
            for (int k = 0; k < 3; ++k) {
                after[k] += q[k] / 8;
                mean_z[k] += z[k] / 8;
            }
        }
        const auto before = softmax3(mean_z);
        double d_after = 0, d_before = 0;
        for (int k = 0; k < 3; ++k) {
            d_after = std::max(d_after, std::abs(p[k] - after[k]));
            d_before = std::max(d_before, std::abs(p[k] - before[k]));
        }
        worst_stub = std::max(worst_stub, d_after);
        min_gap = std::min(min_gap, d_before);
        worst_simplex = std::max(worst_simplex, std::abs(p[0] + p[1] + p[2] - 1.0));
    }
    c.expect(worst_stub <= 1e-6 && min_gap > 1e-4,
             fmt::format("softmax then average (matches {:.1e}, differs from average-then-softmax by >= {:.1e})",
                         worst_stub, min_gap));
    c.expect(worst_simplex <= 1e-6, fmt::format("simplex (max {:.2e})", worst_simplex));
    c.note(fmt::format("invariance {:.1e} against single-view spread {:.1e}, simplex {:.1e}", worst_inv, spread,
                       worst_simplex));
}

// ---------------------------------------------------------------------------------------

double max_table_diff(const PredictionTable& a, const PredictionTable& b) {
    if (a.rows.size() != b.rows.size()) return INFINITY;
    double d = 0;
    for (const auto& [id, p] : a.rows) {
        const auto it = b.rows.find(id);
        if (it == b.rows.end()) return INFINITY;
        for (int k = 0; k < 3; ++k) d = std::max(d, std::abs(p[k] - it->second[k]));
    }
    return d;
}

bool on_simplex(const PredictionTable& t) {
    for (const auto& [id, p] : t.rows) {
        if (std::abs(p[0] + p[1] + p[2] - 1.0) > 1e-9 || *std::min_element(p.begin(), p.end()) < 0) return false;
    }
    return true;
}

void fusion_suite(Checks& c) {
    std::mt19937_64 rng(77);
    std::vector<PredictionTable> tables;
    for (int i = 0; i < 6; ++i) tables.push_back(testsupport::random_table(rng, "t" + std::to_string(i), 40));

    const std::vector<PredictionTable> copies(4, tables[0]);
    c.expect(max_table_diff(average_tables(copies, "idem"), tables[0]) <= 1e-15, "idempotence");
    const auto fused = average_tables(tables, "f");
    auto shuffled = tables;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    c.expect(max_table_diff(average_tables(shuffled, "f"), fused) == 0.0, "permutation invariance");
    c.expect(on_simplex(fused), "simplex preservation");

    const ExperimentPlan plan{{kArchitectures.begin(), kArchitectures.end()}, {128, 224, 448, 768}, {OptimizerKind::SGDM}, {1}};
    const FusionGraph graph(plan);
    double worst = 0;
    for (int trial = 0; trial < 10; ++trial) {
        TempDir dir("accept_fusion");
        std::vector<PredictionTable> leaves;
        for (const auto& cell : plan.cells()) {
            leaves.push_back(testsupport::random_table(rng, cell.run_id(), 50));
            save_prediction_table(dir.path(), leaves.back());
        }
        for (auto level : {FusionLevel::L1, FusionLevel::L2, FusionLevel::L3})
            for (const auto& id : graph.node_ids(level)) fuse_node(graph.node(id), plan, dir.path());
        const auto nested = load_prediction_table(dir.path(), level3_id());
        // Flat reference: long double sum over all 12 leaves.
        PredictionTable flat;
        for (const auto& [id, p] : leaves.front().rows) {
            std::array<long double, 3> acc{};
            for (const auto& t : leaves)
                for (int k = 0; k < 3; ++k) acc[k] += t.rows.at(id)[k];
            flat.rows[id] = {static_cast<double>(acc[0] / 12), static_cast<double>(acc[1] / 12), static_cast<double>(acc[2] / 12)};
        }
        c.expect(leaves.size() == 12 && graph.leaf_run_count(level3_id()) == 12, "12 leaves");
        worst = std::max(worst, max_table_diff(nested, flat));
        c.expect(on_simplex(nested), "nested result on simplex");
    }
    c.expect(worst <= 1e-9, fmt::format("nested equals flat (max {:.2e})", worst));

    const FusionGraph paper(ExperimentPlan::paper());
    const auto leaves = paper.leaf_run_count(level3_id());
    c.expect(leaves == 108, fmt::format("paper L3 leaf runs {}", leaves));
    bool excluded = true;
    for (const auto& id : paper.node_ids(FusionLevel::L2))
        for (const auto& child : paper.node(id).children) excluded = excluded && child.find("/64") == std::string::npos;
    c.expect(excluded, "no 64 px child at L2");
    bool refused = false;
    try {
        const int res[] = {64, 128};
        make_level2_node(Architecture::ResNet18, res);
    } catch (const Error& e) {
        refused = e.kind() == ErrorKind::fusion;
    }
    c.expect(refused, "explicit 64 px L2 node refused");
    c.note(fmt::format("nested-flat {:.1e}, L3 leaves {}", worst, leaves));
}

// ---------------------------------------------------------------------------------------

double pairwise_auc(const std::vector<double>& s, const std::vector<char>& y) {
    double credit = 0, pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!y[i]) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[j]) continue;
            pairs += 1;
            credit += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
        }
    }
    return credit / pairs;
}

double trapezoid_auc(const std::vector<double>& s, const std::vector<char>& y) {
    std::vector<bool> b(y.begin(), y.end());
    auto flags = std::make_unique<bool[]>(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) flags[i] = b[i];
    return roc_auc(s, std::span<const bool>(flags.get(), b.size())).auc;
}

struct PaperRow {
    std::string approach, size, mm, sk, avg;
};

// Rows of the comparison table as printed in the paper source.
std::vector<PaperRow> paper_comparison_rows() {
    std::ifstream in(testsupport::source_dir() / "paper.md");
    std::string line;
    bool inside = false;
    std::vector<PaperRow> rows;
    while (std::getline(in, line)) {
        if (line.find("\\label{tab:comparison}") != std::string::npos) inside = true;
        if (!inside) continue;
        if (line.find("\\end{tabular}") != std::string::npos) break;
        if (line.find('&') == std::string::npos || line.find("textbf") != std::string::npos) continue;
        line = std::regex_replace(line, std::regex(R"(~?\\cite\{[^}]*\})"), "");
        line = std::regex_replace(line, std::regex(R"(\{\\it ([^}]*)\})"), "$1");
        line = std::regex_replace(line, std::regex(R"(\$(\d+)\\times(\d+)\$)"), "$1x$2");
        line = std::regex_replace(line, std::regex(R"(\\\\)"), "");
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, '&');) {
            const auto b = cell.find_first_not_of(" \t"), e = cell.find_last_not_of(" \t");
            cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
        }
        if (cells.size() == 5) rows.push_back({cells[0], cells[1], cells[2], cells[3], cells[4]});
    }
    return rows;
}

void evaluator_suite(Checks& c) {
    std::mt19937_64 rng(2024);
    double worst = 0;
    for (int instance = 0; instance < 1000; ++instance) {
        const int n = std::uniform_int_distribution<int>(2, 200)(rng);
        std::vector<double> s(n);
        std::vector<char> y(n);
        const int levels = std::uniform_int_distribution<int>(2, 50)(rng);  // coarse scores force ties
        for (int i = 0; i < n; ++i) {
            s[i] = std::uniform_int_distribution<int>(0, levels)(rng) / static_cast<double>(levels);
            y[i] = std::bernoulli_distribution(0.3)(rng);
        }
        y[0] = 1;
        y[1] = 0;
        worst = std::max(worst, std::abs(trapezoid_auc(s, y) - pairwise_auc(s, y)));

        if (instance % 50 == 0) {
            std::vector<double> t(n);
            for (int i = 0; i < n; ++i) t[i] = std::exp(3 * s[i]) - 7;
            c.expect(trapezoid_auc(t, y) == trapezoid_auc(s, y), "monotone-transform invariance");
        }
    }
    c.expect(worst <= 1e-9, fmt::format("trapezoid equals pairwise (max {:.2e})", worst));

    const std::vector<char> y{1, 1, 0, 0, 0, 1};
    c.expect(trapezoid_auc({0.9, 0.8, 0.1, 0.2, 0.3, 0.7}, y) == 1.0, "perfect scores give 1.0");
    c.expect(trapezoid_auc(std::vector<double>(6, 0.4), y) == 0.5, "all-tied scores give 0.5");

    std::vector<ImageRecord> records;
    PredictionTable uniform, random_tab;
    const Label labels[] = {Label::MM, Label::SK, Label::BN};
    for (int i = 0; i < 90; ++i) {
        const std::string id = fmt::format("img{:03}", i);
        records.push_back({id, "x.png", labels[i % 3], Split::test, std::nullopt, std::nullopt});
        uniform.rows[id] = {1.0 / 3, 1.0 / 3, 1.0 / 3};
        random_tab.rows[id] = testsupport::random_simplex(rng);
    }
    const DatasetManifest manifest(records, ".");
    const auto u = evaluate_table(uniform, manifest);
    c.expect(u.auc_mm == 0.5 && u.auc_sk == 0.5, "uniform predictions give 0.5");

    const auto lists = exemplar_lists(random_tab, manifest);
    for (const auto& [task, l] : lists) {
        std::set<std::string> ids(l.correct.begin(), l.correct.end());
        ids.insert(l.incorrect.begin(), l.incorrect.end());
        c.expect(l.correct.size() + l.incorrect.size() == 90 && ids.size() == 90,
                 fmt::format("{} exemplars partition the test set", to_string(task)));
    }

    const auto paper_rows = paper_comparison_rows();
    EvalReport ours;
    ours.auc_mm = 0.9;
    ours.auc_sk = 0.95;
    ours.auc_avg = 0.925;
    const auto rows = comparison_report(ours);
    c.expect(paper_rows.size() == 8, fmt::format("{} comparison rows in the paper", paper_rows.size()));
    c.expect(rows.size() == paper_rows.size() + 1, "baselines followed by our row");
    int matched = 0;
    for (std::size_t i = 0; i < std::min(paper_rows.size(), rows.size()); ++i) {
        const auto& p = paper_rows[i];
        const auto& r = rows[i];
        const auto surname = p.approach.substr(0, p.approach.find(' '));
        const bool ok = r.approach.rfind(surname, 0) == 0 && r.input_size == p.size &&
                        format_percent(r.mm, r.decimals) == p.mm && format_percent(r.sk, r.decimals) == p.sk &&
                        format_percent(r.avg, r.decimals) == p.avg;
        c.expect(ok, "comparison row " + p.approach);
        matched += ok ? 1 : 0;
    }
    c.note(fmt::format("AUC oracle max {:.1e}, {} published rows byte-match", worst, matched));
}

// ---------------------------------------------------------------------------------------

std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file() || e.path().filename() == ".lock") continue;
        out[fs::relative(e.path(), root).string()] =
            sha256_file(e.path()) + " " + std::to_string(e.last_write_time().time_since_epoch().count());
    }
    return out;
}

void end_to_end(Checks& c) {
    TempDir dir("accept_e2e");
    // The bundled toy config, with paths redirected into a scratch directory.
    std::ifstream in(testsupport::source_dir() / "configs" / "toy.cfg");
    std::ofstream out(dir / "toy.cfg");
    for (std::string line; std::getline(in, line);) {
        if (line.rfind("manifest", 0) == 0) line = "manifest = \"" + testsupport::toy_manifest().string() + "\"";
        if (line.rfind("work_dir", 0) == 0) line = "work_dir = \"work\"";
        out << line << "\n";
    }
    out.close();

    const auto plan = ExperimentPlan::from_config(KeyValueConfig::load(dir / "toy.cfg"));
    c.expect(plan.architectures.size() == 2 && plan.resolutions.size() == 2 && plan.optimizers.size() == 2 &&
                 plan.repeats.size() == 2,
             "2x2x2x2 matrix");

    const auto cmd = fmt::format("'{}' all --config '{}' > '{}' 2>&1", SKINRES_CLI, (dir / "toy.cfg").string(),
                                 (dir / "log1.txt").string());
    const auto t0 = std::chrono::steady_clock::now();
    const int status = testsupport::run_command(cmd);
    const double first = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    c.expect(status == 0, fmt::format("all exits 0 (got {})", status));
    if (status != 0) {
        c.note(read_file(dir / "log1.txt").substr(0, 400));
        return;
    }

    const auto work = dir / "work";
    c.expect(fs::exists(work / "preds" / "fusion_graph.json"), "fusion tree written");
    const auto manifest = load_manifest(testsupport::toy_manifest());
    const auto fused = load_prediction_table(work / "preds", level3_id());

    // AUC of the fused table, recomputed from scratch with the pairwise statistic.
    double avg = 0;
    for (int task = 0; task < 2; ++task) {
        std::vector<double> s;
        std::vector<char> y;
        for (const auto& r : manifest.split_records(Split::test)) {
            s.push_back(fused.rows.at(r.image_id)[task]);
            y.push_back(r.label == (task == 0 ? Label::MM : Label::SK));
        }
        avg += pairwise_auc(s, y) / 2;
    }
    const auto report = evaluate_table(fused, manifest);
    c.expect(std::abs(report.auc_avg - avg) <= 1e-9, "EvalReport agrees with the pairwise statistic");
    c.expect(avg >= 0.95, fmt::format("fused average AUC {:.4f}", avg));
    c.expect(fs::exists(work / "reports" / "eval" / "L3" / "final.json"), "EvalReport written");

    const auto before = snapshot(work);
    const int again = testsupport::run_command(fmt::format("'{}' all --config '{}' > '{}' 2>&1", SKINRES_CLI,
                                                           (dir / "toy.cfg").string(), (dir / "log2.txt").string()));
    const auto after = snapshot(work);
    std::size_t changed = 0;
    for (const auto& [path, stamp] : after) changed += before.count(path) && before.at(path) == stamp ? 0 : 1;
    changed += before.size() > after.size() ? before.size() - after.size() : 0;
    c.expect(again == 0 && changed == 0, fmt::format("re-run changed {} of {} files", changed, before.size()));
    c.note(fmt::format("L3 avg AUC {:.4f} (MM {:.4f}, SK {:.4f}), first run {:.0f} s, {} files unchanged on re-run",
                       avg, report.auc_mm, report.auc_sk, first, after.size()));
}

struct Criterion {
    std::string name;
    double budget_s;  ///< 0: no runtime limit
    std::function<void(Checks&)> run;
};

}  // namespace

int main(int argc, char** argv) {
    torch::set_num_threads(1);
    const std::vector<Criterion> criteria{
        {"preprocess", 10, preprocess_suite}, {"augment", 5, augment_suite},
        {"model", 300, model_suite},          {"trainer", 600, trainer_suite},
        {"tta", 0, tta_suite},                {"fusion", 0, fusion_suite},
        {"evaluator", 0, evaluator_suite},    {"e2e", 1800, end_to_end},
    };
    const std::set<std::string> wanted(argv + 1, argv + argc);

    int failed = 0;
    for (const auto& crit : criteria) {
        if (!wanted.empty() && !wanted.count(crit.name)) continue;
        Checks checks;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            crit.run(checks);
        } catch (const std::exception& e) {
            checks.expect(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (crit.budget_s > 0) checks.expect(secs < crit.budget_s, fmt::format("runtime {:.1f} s over budget", secs));
        const bool ok = checks.ok();
        failed += ok ? 0 : 1;
        const auto budget = crit.budget_s > 0 ? fmt::format("< {:.0f} s", crit.budget_s) : std::string("no limit");
        std::cout << fmt::format("{} {:<10} {:7.1f} s ({:>8})  {}", ok ? "PASS" : "FAIL", crit.name, secs, budget,
                                 checks.summary())
                  << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
