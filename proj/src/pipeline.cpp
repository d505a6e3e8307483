#include "skinres/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <map>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>
#include <torch/torch.h>

#include "skinres/error.hpp"
#include "skinres/fsutil.hpp"
#include "skinres/predictor.hpp"

namespace skinres {

namespace {

using json = nlohmann::ordered_json;

fs::path resolve_path(const fs::path& base, const fs::path& p) {
    return p.is_absolute() ? p : (base / p).lexically_normal();
}

double to_double(const std::string& s, const std::string& key) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    fail(ErrorKind::config, fmt::format("{}: '{}' is not a number", key, s));
}

std::string resolution_label(int r) { return fmt::format("{}x{}", r, r); }

ResultRow row_from(const std::string& approach, const std::string& size, const EvalReport& r) {
    return {approach, size, 100.0 * r.auc_mm, 100.0 * r.auc_sk, 100.0 * r.auc_avg, 2};
}

}  // namespace

PipelineConfig PipelineConfig::from_config(const KeyValueConfig& cfg, const fs::path& base_dir) {
    PipelineConfig c;
    const auto manifest = cfg.find_string("paths.manifest");
    if (!manifest) fail(ErrorKind::config, "paths.manifest is required");
    const fs::path work = resolve_path(base_dir, cfg.get_string("paths.work_dir", "work"));
    c.paths.manifest = resolve_path(base_dir, *manifest);
    c.paths.cache_root = resolve_path(base_dir, cfg.get_string("paths.cache_root", (work / "cache").string()));
    c.paths.runs_dir = resolve_path(base_dir, cfg.get_string("paths.runs_dir", (work / "runs").string()));
    c.paths.preds_dir = resolve_path(base_dir, cfg.get_string("paths.preds_dir", (work / "preds").string()));
    c.paths.reports_dir = resolve_path(base_dir, cfg.get_string("paths.reports_dir", (work / "reports").string()));
    if (const auto store = cfg.find_string("paths.weight_store")) c.paths.weight_store = resolve_path(base_dir, *store);

    c.plan = ExperimentPlan::from_config(cfg);

    if (const auto mean = cfg.find_list("preprocess.mean_rgb")) {
        if (mean->size() != 3) fail(ErrorKind::config, "preprocess.mean_rgb needs three values");
        for (std::size_t i = 0; i < 3; ++i) c.preprocess.mean_rgb[i] = to_double((*mean)[i], "preprocess.mean_rgb");
    }
    c.preprocess.apply_color_constancy = cfg.get_bool("preprocess.apply_color_constancy", true);
    const auto order = cfg.get_string("preprocess.order", "constancy_subtract_resize");
    if (order == "constancy_subtract_resize") c.preprocess.order = StageOrder::constancy_subtract_resize;
    else if (order == "constancy_resize_subtract") c.preprocess.order = StageOrder::constancy_resize_subtract;
    else fail(ErrorKind::config, fmt::format("preprocess.order: unknown value '{}'", order));
    for (int r : c.plan.resolutions) {
        c.preprocess.target_resolution = r;
        c.preprocess.validate();
    }
    c.preprocess.target_resolution = c.plan.resolutions.front();

    c.training = TrainingDefaults::from_config(cfg);
    c.evaluation.primary_node = cfg.get_string("evaluation.primary_node", "");
    c.evaluation.roc_plot = cfg.get_bool("evaluation.roc_plot", true);
    c.threads = static_cast<int>(cfg.get_int("runtime.threads", 0));
    if (c.threads < 0) fail(ErrorKind::config, "runtime.threads must be >= 0");
    return c;
}

PipelineConfig PipelineConfig::load(const std::optional<fs::path>& config_path,
                                    const std::optional<fs::path>& plan_path) {
    if (!config_path && !plan_path) fail(ErrorKind::config, "no configuration given (use --config or --plan)");
    KeyValueConfig cfg;
    fs::path base;
    if (config_path) {
        cfg = KeyValueConfig::load(*config_path);
        base = fs::absolute(*config_path).parent_path();
    }
    if (plan_path) {
        auto plan = KeyValueConfig::load(*plan_path);
        if (!config_path) {
            cfg = std::move(plan);
            base = fs::absolute(*plan_path).parent_path();
        } else {
            cfg.merge(plan);
        }
    }
    auto c = from_config(cfg, base);
    if (const char* root = std::getenv(kCacheRootEnv); root != nullptr && *root != '\0') {
        c.paths.cache_root = fs::absolute(root);
    }
    return c;
}

std::optional<Stage> parse_stage(std::string_view name) {
    static const std::map<std::string_view, Stage> table{
        {"ingest", Stage::ingest}, {"preprocess", Stage::preprocess}, {"train", Stage::train},
        {"predict", Stage::predict}, {"fuse", Stage::fuse}, {"evaluate", Stage::evaluate},
        {"report", Stage::report}, {"all", Stage::all}};
    const auto it = table.find(name);
    if (it == table.end()) return std::nullopt;
    return it->second;
}

std::string_view to_string(Stage stage) noexcept {
    switch (stage) {
        case Stage::ingest: return "ingest";
        case Stage::preprocess: return "preprocess";
        case Stage::train: return "train";
        case Stage::predict: return "predict";
        case Stage::fuse: return "fuse";
        case Stage::evaluate: return "evaluate";
        case Stage::report: return "report";
        case Stage::all: return "all";
    }
    return "?";
}

Pipeline::Pipeline(PipelineConfig config, std::ostream& log)
    : config_(std::move(config)), log_(log), graph_(config_.plan) {
    if (config_.threads > 0) torch::set_num_threads(config_.threads);
}

void Pipeline::say(const std::string& text) {
    log_ << text;
    log_.flush();
}

const DatasetManifest& Pipeline::manifest() {
    if (!manifest_) manifest_ = load_manifest(config_.paths.manifest);
    return *manifest_;
}

PreprocessConfig Pipeline::preprocess_at(int resolution) const {
    auto p = config_.preprocess;
    p.target_resolution = resolution;
    return p;
}

std::vector<TrainConfig> Pipeline::train_configs() const {
    auto configs = expand_plan(config_.plan, config_.training);
    if (manifest_) {
        const DatasetManifest train_only(manifest_->split_records(Split::train), manifest_->base_dir());
        const auto records_hash = sha256_hex(format_manifest(train_only));
        for (auto& c : configs) {
            c.input_fingerprint = sha256_hex(records_hash + ":" + preprocess_at(c.resolution).hash());
        }
    }
    return configs;
}

std::string Pipeline::primary_node() const {
    if (!config_.evaluation.primary_node.empty()) {
        if (!graph_.contains(config_.evaluation.primary_node)) {
            fail(ErrorKind::config, fmt::format("evaluation.primary_node '{}' is not a node of this plan",
                                                config_.evaluation.primary_node));
        }
        return config_.evaluation.primary_node;
    }
    if (graph_.contains(level3_id())) return level3_id();
    return single_resolution_id(*std::max_element(config_.plan.resolutions.begin(), config_.plan.resolutions.end()));
}

void Pipeline::run(Stage stage, const StageOptions& options) {
    if (options.dry_run) {
        log_ << describe_plan();
        return;
    }
    switch (stage) {
        case Stage::ingest: ingest(); break;
        case Stage::preprocess: preprocess(); break;
        case Stage::train: train(options); break;
        case Stage::predict: predict(options); break;
        case Stage::fuse: fuse(options.fuse_level); break;
        case Stage::evaluate: evaluate(); break;
        case Stage::report: report(); break;
        case Stage::all:
            ingest();
            preprocess();
            train(options);
            predict(options);
            fuse();
            evaluate();
            report();
            break;
    }
}

void Pipeline::ingest() {
    const auto& m = manifest();
    const auto report = verify_dataset(m);
    json j;
    j["manifest"] = config_.paths.manifest.string();
    for (Split s : {Split::train, Split::test}) {
        const auto counts = m.class_counts(s);
        json c;
        for (Label l : kLabels) c[std::string(to_string(l))] = counts[static_cast<std::size_t>(l)];
        j["class_counts"][std::string(to_string(s))] = c;
        say(fmt::format("[ingest] {}: {} images (MM {}, SK {}, BN {})\n", to_string(s), m.size(s), counts[0],
                            counts[1], counts[2]));
    }
    j["unreadable"] = report.unreadable;
    j["not_three_channel"] = report.not_three_channel;
    j["dimension_mismatch"] = report.dimension_mismatch;
    j["ok"] = report.ok();
    write_if_changed(config_.paths.reports_dir / "dataset.json", j.dump(2) + "\n");
    if (!report.ok()) {
        std::vector<std::string> bad = report.unreadable;
        bad.insert(bad.end(), report.not_three_channel.begin(), report.not_three_channel.end());
        bad.insert(bad.end(), report.dimension_mismatch.begin(), report.dimension_mismatch.end());
        fail(ErrorKind::schema, fmt::format("dataset validation failed for {} images: {}", bad.size(), fmt::join(bad, ", ")));
    }
}

void Pipeline::preprocess() {
    const auto& m = manifest();
    for (int r : config_.plan.resolutions) {
        const auto summary = materialize_cache(m, preprocess_at(r), config_.paths.cache_root);
        say(fmt::format("[preprocess] {} px: {} written, {} up to date\n", r, summary.written, summary.skipped));
    }
}

std::vector<RunResult> Pipeline::train(const StageOptions& options) {
    const auto& m = manifest();
    for (int r : config_.plan.resolutions) {
        const auto missing = missing_cache_entries(config_.paths.cache_root, preprocess_at(r), m.split_records(Split::train));
        if (!missing.empty()) {
            fail(ErrorKind::missing_prerequisite,
                 fmt::format("train needs the tensor cache at {} px ({} of {} training images missing); run "
                             "the preprocess stage first",
                             r, missing.size(), m.size(Split::train)));
        }
    }
    std::unique_ptr<WeightStore> store;
    if (config_.paths.weight_store) store = std::make_unique<DirectoryWeightStore>(*config_.paths.weight_store);

    const RunRegistry registry(config_.paths.runs_dir);
    const auto configs = train_configs();
    std::size_t done_before = 0;
    for (const auto& c : configs) done_before += options.resume && registry.is_complete(c) ? 1 : 0;
    say(fmt::format("[train] {} cells, {} already complete\n", configs.size(), done_before));

    TrainingSet data{&m, config_.paths.cache_root, config_.preprocess};
    MatrixOptions matrix{options.workers, options.resume, {}};
    std::vector<std::string> failed;
    matrix.on_result = [&](const RunResult& r) {
        if (r.completed) {
            say(r.epoch_losses.empty() ? fmt::format("[train] {}: done (no epochs)\n", r.run_id)
                                       : fmt::format("[train] {}: loss {:.4f} -> {:.4f}\n", r.run_id,
                                                     r.epoch_losses.front(), r.epoch_losses.back()));
        } else {
            failed.push_back(r.run_id);
            say(fmt::format("[train] {}: {} ({})\n", r.run_id, r.status, r.error));
        }
    };
    const auto results = run_matrix(configs, data, store.get(), registry, matrix);
    if (!failed.empty()) {
        fail(ErrorKind::runtime, fmt::format("{} of {} training cells did not complete: {}", failed.size(),
                                             results.size(), fmt::join(failed, ", ")));
    }
    return results;
}

fs::path Pipeline::provenance_path(const std::string& run_id) const {
    return config_.paths.preds_dir / (run_id + ".provenance.json");
}

std::string Pipeline::prediction_provenance(const TrainConfig& c, const RunRegistry& registry) {
    std::string ids;
    for (const auto& r : manifest().split_records(Split::test)) ids += r.image_id + "\n";
    json j;
    j["source_id"] = c.run_id();
    j["checkpoint_sha256"] = registry.load(c.run_id())->checkpoint_sha256;
    j["preprocess_hash"] = preprocess_at(c.resolution).hash();
    j["test_ids_sha256"] = sha256_hex(ids);
    return j.dump(2) + "\n";
}

void Pipeline::predict(const StageOptions& options) {
    const auto& m = manifest();
    const RunRegistry registry(config_.paths.runs_dir);
    const auto configs = train_configs();

    std::vector<std::string> untrained;
    for (const auto& c : configs) {
        if (!registry.is_complete(c)) untrained.push_back(c.run_id());
    }
    if (!untrained.empty()) {
        fail(ErrorKind::missing_prerequisite,
             fmt::format("predict needs trained checkpoints for {} cells ({}); run the train stage first",
                         untrained.size(), fmt::join(untrained, ", ")));
    }
    for (int r : config_.plan.resolutions) {
        const auto missing = missing_cache_entries(config_.paths.cache_root, preprocess_at(r), m.split_records(Split::test));
        if (!missing.empty()) {
            fail(ErrorKind::missing_prerequisite,
                 fmt::format("predict needs cached test tensors at {} px ({} missing: {}); run the preprocess stage first",
                             r, missing.size(), fmt::join(missing, ", ")));
        }
    }

    std::vector<std::size_t> pending;
    std::vector<std::string> provenance(configs.size());
    for (std::size_t i = 0; i < configs.size(); ++i) {
        provenance[i] = prediction_provenance(configs[i], registry);
        const auto stamp = provenance_path(configs[i].run_id());
        std::error_code ec;
        const bool current = fs::is_regular_file(prediction_path(config_.paths.preds_dir, configs[i].run_id()), ec) &&
                             fs::is_regular_file(stamp, ec) && read_file(stamp) == provenance[i];
        if (!current) pending.push_back(i);
    }
    say(fmt::format("[predict] {} runs, {} up to date\n", configs.size(), configs.size() - pending.size()));

    std::atomic<std::size_t> next{0};
    std::vector<std::string> errors(pending.size());
    auto worker = [&] {
        for (std::size_t k = next++; k < pending.size(); k = next++) {
            const auto& c = configs[pending[k]];
            try {
                auto model = load_trained_model(c, registry);
                auto table = predict_dataset(model_logits(model), c.run_id(), m, config_.paths.cache_root,
                                             preprocess_at(c.resolution));
                save_prediction_table(config_.paths.preds_dir, table);
                write_if_changed(provenance_path(c.run_id()), provenance[pending[k]]);
            } catch (const std::exception& e) {
                errors[k] = fmt::format("{}: {}", c.run_id(), e.what());
            }
        }
    };
    const int workers = std::max(1, options.workers);
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> threads;
        for (int w = 0; w < workers; ++w) threads.emplace_back(worker);
    }
    std::erase_if(errors, [](const std::string& e) { return e.empty(); });
    if (!errors.empty()) fail(ErrorKind::inference, fmt::format("prediction failed: {}", fmt::join(errors, "; ")));
}

void Pipeline::fuse(const std::string& level) {
    const auto& preds = config_.paths.preds_dir;
    write_if_changed(preds / "fusion_graph.json", graph_.to_json());
    auto fuse_level = [&](FusionLevel l) {
        for (const auto& id : graph_.node_ids(l)) {
            PredictionTable table;
            try {
                table = fuse_node(graph_.node(id), config_.plan, preds);
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::missing_prerequisite) throw;
                const bool leaves = l == FusionLevel::L1 || l == FusionLevel::single_res;
                fail(e.kind(), fmt::format("{}; {}", e.what(), leaves ? "run the predict stage first"
                                                                      : "fuse the lower levels first"));
            }
            say(fmt::format("[fuse] {} <- {} sources, {} images\n", id, graph_.node(id).children.size(), table.rows.size()));
        }
    };
    if (level.empty()) {
        for (auto l : {FusionLevel::L1, FusionLevel::single_res, FusionLevel::L2, FusionLevel::L3}) fuse_level(l);
    } else if (level == "1") {
        fuse_level(FusionLevel::L1);
    } else if (level == "2") {
        fuse_level(FusionLevel::L2);
    } else if (level == "3") {
        fuse_level(FusionLevel::L3);
    } else if (level == "single") {
        fuse_level(FusionLevel::single_res);
    } else {
        fail(ErrorKind::config, fmt::format("unknown fusion level '{}' (expected 1, 2, 3 or single)", level));
    }
}

void Pipeline::evaluate() {
    const auto& m = manifest();
    std::vector<std::string> sources;
    for (const auto& c : config_.plan.cells()) sources.push_back(c.run_id());
    for (const auto& n : graph_.nodes()) sources.push_back(n.node_id);

    json summary;
    for (const auto& id : sources) {
        const auto report = evaluate_table(load_prediction_table(config_.paths.preds_dir, id), m);
        write_if_changed(config_.paths.reports_dir / "eval" / (id + ".json"), report_to_json(report) + "\n");
        summary[id] = {{"MM", report.auc_mm}, {"SK", report.auc_sk}, {"avg", report.auc_avg}};
    }
    write_if_changed(config_.paths.reports_dir / "auc_summary.json", summary.dump(2) + "\n");
    say(fmt::format("[evaluate] {} prediction tables scored\n", sources.size()));
}

EvalReport Pipeline::report() {
    const auto& m = manifest();
    const auto& plan = config_.plan;
    const auto& preds = config_.paths.preds_dir;
    std::map<std::string, EvalReport> cache;
    auto eval = [&](const std::string& id) -> const EvalReport& {
        auto it = cache.find(id);
        if (it == cache.end()) it = cache.emplace(id, evaluate_table(load_prediction_table(preds, id), m)).first;
        return it->second;
    };

    std::string text;
    // Per-optimiser means over repeats beside the level-1 fusion, one block per resolution.
    for (int r : plan.resolutions) {
        std::vector<ResultRow> rows;
        for (auto arch : plan.architectures) {
            for (auto opt : plan.optimizers) {
                double mm = 0, sk = 0, avg = 0;
                for (int k : plan.repeats) {
                    const auto& e = eval(RunCell{arch, r, opt, k}.run_id());
                    mm += e.auc_mm;
                    sk += e.auc_sk;
                    avg += e.auc_avg;
                }
                const double n = static_cast<double>(plan.repeats.size());
                rows.push_back({fmt::format("{} {} mean", to_string(arch), to_string(opt)), resolution_label(r),
                                100.0 * mm / n, 100.0 * sk / n, 100.0 * avg / n, 2});
            }
            rows.push_back(row_from(fmt::format("{} average over optimisers", to_string(arch)), resolution_label(r),
                                    eval(level1_id(arch, r))));
        }
        text += render_text_table(fmt::format("Optimisers and level 1 fusion at {} px (AUC %)", r), rows) + "\n";
    }

    std::vector<ResultRow> by_size;
    for (int r : plan.resolutions) {
        for (auto arch : plan.architectures) {
            by_size.push_back(row_from(std::string(to_string(arch)), resolution_label(r), eval(level1_id(arch, r))));
        }
    }
    text += render_text_table("Effect of input size (level 1 fusion, AUC %)", by_size) + "\n";

    if (graph_.contains(level3_id())) {
        std::vector<ResultRow> levels;
        for (auto arch : plan.architectures) {
            levels.push_back(row_from(fmt::format("{} (level 2)", to_string(arch)), "multiple", eval(level2_id(arch))));
        }
        levels.push_back(row_from("level 3 fusion", "multiple", eval(level3_id())));
        text += render_text_table("Level 2 and level 3 fusion (AUC %)", levels) + "\n";
    }

    std::vector<ResultRow> single;
    for (int r : plan.resolutions) {
        single.push_back(row_from("fusion of all nets", resolution_label(r), eval(single_resolution_id(r))));
    }
    if (graph_.contains(level3_id())) single.push_back(row_from("three-level fusion", "multiple", eval(level3_id())));
    text += render_text_table("Single-resolution fusion of all networks (AUC %)", single) + "\n";

    const auto primary_id = primary_node();
    const auto primary = eval(primary_id);
    const auto comparison = comparison_report(primary);
    text += render_text_table(fmt::format("Comparison with published results (ours: {})", primary_id), comparison);

    const auto& out = config_.paths.reports_dir;
    write_if_changed(out / "results.txt", text);

    json j;
    j["primary_node"] = primary_id;
    j["primary"] = json::parse(report_to_json(primary, false));
    json all;
    for (const auto& [id, e] : cache) all[id] = {{"MM", e.auc_mm}, {"SK", e.auc_sk}, {"avg", e.auc_avg}};
    j["sources"] = all;
    write_if_changed(out / "results.json", j.dump(2) + "\n");

    json ex;
    for (const auto& [task, lists] : exemplar_lists(load_prediction_table(preds, primary_id), m)) {
        ex[std::string(to_string(task))] = {{"correct", lists.correct}, {"incorrect", lists.incorrect}};
    }
    write_if_changed(out / "exemplars.json", ex.dump(2) + "\n");
    if (config_.evaluation.roc_plot) emit_roc_plot(primary, out / "roc.svg");

    say(text);
    say(fmt::format("[report] {}: MM {:.4f}  SK {:.4f}  avg {:.4f}\n", primary_id, primary.auc_mm, primary.auc_sk,
                        primary.auc_avg));
    return primary;
}

std::string Pipeline::describe_plan() const {
    std::ostringstream os;
    const auto& p = config_.paths;
    os << "manifest:    " << p.manifest.string() << "\n";
    os << "cache root:  " << p.cache_root.string() << "\n";
    os << "weights:     " << (p.weight_store ? p.weight_store->string() : std::string("(none)")) << "\n";
    os << "runs:        " << p.runs_dir.string() << "\n";
    os << "predictions: " << p.preds_dir.string() << "\n";
    os << "reports:     " << p.reports_dir.string() << "\n";
    os << "tensor cache:\n";
    for (int r : config_.plan.resolutions) os << "  " << (p.cache_root / std::to_string(r)).string() << "/\n";

    const auto configs = expand_plan(config_.plan, config_.training);
    const RunRegistry registry(p.runs_dir);
    os << fmt::format("training cells ({}):\n", configs.size());
    for (const auto& c : configs) {
        os << fmt::format("  {:<28} epochs {:>2}  batch {:>2}  lr {:g}  seed {}  -> {}\n", c.run_id(), c.epochs,
                          c.batch_size, c.optimizer.base_lr, c.seed, registry.checkpoint_path(c.run_id()).string());
    }
    os << "fusion tree:\n";
    for (auto level : {FusionLevel::L1, FusionLevel::single_res, FusionLevel::L2, FusionLevel::L3}) {
        for (const auto& id : graph_.node_ids(level)) {
            const auto& n = graph_.node(id);
            os << fmt::format("  {:<18} [{}] {} <- {}\n", id, to_string(level),
                              prediction_path(p.preds_dir, id).string(), fmt::join(n.children, ", "));
        }
    }
    if (graph_.contains(level3_id())) os << fmt::format("  {} covers {} runs\n", level3_id(), graph_.leaf_run_count(level3_id()));
    os << "primary node: " << primary_node() << "\n";
    return os.str();
}

}  // namespace skinres
