#include "flowlab/cli/stages.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <utility>

#include "flowlab/cli/figures.hpp"
#include "flowlab/core/sha256.hpp"
#include "flowlab/core/version.hpp"
#include "flowlab/flow/checkpoint.hpp"
#include "flowlab/flow/train.hpp"
#include "flowlab/metrics/predictions.hpp"
#include "flowlab/synth/render.hpp"
#include "flowlab/trainer/classifier.hpp"

namespace flowlab::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

json StageRecord::to_json() const {
    json arts = json::array();
    for (const auto& a : artifacts) arts.push_back({{"path", a.path}, {"sha256", a.sha256}});
    return {{"name", name},
            {"key", key},
            {"skipped", skipped},
            {"seconds", seconds},
            {"artifacts", arts}};
}

StageRecord StageRecord::from_json(const json& j) {
    StageRecord rec;
    rec.name = j.at("name").get<std::string>();
    rec.key = j.at("key").get<std::string>();
    rec.skipped = j.value("skipped", false);
    rec.seconds = j.value("seconds", 0.0);
    for (const auto& a : j.at("artifacts"))
        rec.artifacts.push_back(
            {a.at("path").get<std::string>(), a.at("sha256").get<std::string>()});
    return rec;
}

const StageRecord* ExperimentManifest::find(const std::string& name) const {
    for (const auto& s : stages)
        if (s.name == name) return &s;
    return nullptr;
}

json ExperimentManifest::to_json() const {
    json stage_rows = json::array();
    for (const auto& s : stages) stage_rows.push_back(s.to_json());
    return {{"tool_version", tool_version}, {"config", config_echo}, {"stages", stage_rows}};
}

ExperimentManifest ExperimentManifest::from_json(const json& j) {
    ExperimentManifest m;
    m.tool_version = j.at("tool_version").get<std::string>();
    m.config_echo = j.at("config");
    for (const auto& s : j.at("stages")) m.stages.push_back(StageRecord::from_json(s));
    return m;
}

std::string sanitize_label(const std::string& label) {
    std::string out;
    out.reserve(label.size());
    for (char c : label) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
        const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
        out.push_back(ok ? c : '-');
    }
    return out.empty() ? std::string("run") : out;
}

std::vector<std::string> class_tokens(const synth::RenderConfig& render) {
    std::vector<std::string> tokens;
    tokens.reserve(render.shapes.size());
    for (auto s : render.shapes) tokens.push_back(synth::shape_name(s));
    std::set<std::string> unique(tokens.begin(), tokens.end());
    if (unique.size() != tokens.size())
        for (std::size_t i = 0; i < tokens.size(); ++i)
            tokens[i] = "class" + std::to_string(i);
    return tokens;
}

synth::AnnotationTable split_annotations(const std::vector<synth::LabeledExample>& split,
                                         const synth::RenderConfig& render) {
    const auto tokens = class_tokens(render);
    synth::AnnotationTable table;
    for (std::size_t i = 0; i < split.size(); ++i)
        table.rows[i] = {tokens.at(split[i].class_label), split[i].bg_group};
    return table;
}

std::vector<metrics::PredictionRow> prediction_rows(
    const std::vector<synth::LabeledExample>& split, const std::vector<int>& predicted,
    const std::vector<std::string>& tokens) {
    if (split.size() != predicted.size())
        throw std::invalid_argument("prediction rows: split and prediction sizes differ");
    std::vector<metrics::PredictionRow> rows;
    rows.reserve(split.size());
    for (std::size_t i = 0; i < split.size(); ++i)
        rows.push_back({i, tokens.at(split[i].class_label), tokens.at(predicted[i])});
    return rows;
}

namespace {

/// Drives the skip-or-run decision per stage and keeps manifest.json current
/// on disk after every stage, so a failed run still documents its progress.
struct StageContext {
    fs::path out;
    ExperimentManifest manifest;
    ExperimentManifest previous;
    Logger log;

    void say(const std::string& s) const {
        if (log) log(s);
    }

    void save() const {
        std::ofstream f(out / "manifest.json");
        f << manifest.to_json().dump(2) << "\n";
    }

    ArtifactRecord artifact(const std::string& rel) const {
        return {rel, Sha256::hex_of_file((out / rel).string())};
    }

    /// True when the previous manifest has this stage with the same input
    /// key and every recorded artifact still verifies; the old record is
    /// then re-committed with skipped=true.
    bool reuse(StageRecord& rec) {
        const StageRecord* prev = previous.find(rec.name);
        if (!prev || prev->key != rec.key) return false;
        for (const auto& a : prev->artifacts) {
            const fs::path p = out / a.path;
            if (!fs::exists(p) || Sha256::hex_of_file(p.string()) != a.sha256) return false;
        }
        rec.skipped = true;
        rec.seconds = 0;
        rec.artifacts = prev->artifacts;
        manifest.stages.push_back(rec);
        save();
        say("[" + rec.name + "] up to date, skipped");
        return true;
    }

    void commit(StageRecord rec) {
        say("[" + rec.name + "] done in " + format_seconds(rec.seconds));
        manifest.stages.push_back(std::move(rec));
        save();
    }

    static std::string format_seconds(double s) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.1fs", s);
        return buf;
    }
};

double elapsed_seconds(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << text;
    if (!f.good()) throw std::runtime_error("failed writing " + path.string());
}

std::string two_digits(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%02d", static_cast<int>(i));
    return buf;
}

json flow_epoch_json(const flow::FlowEpochStats& s) {
    return {{"epoch", s.epoch},
            {"bpd", s.bpd},
            {"kl_nats", s.kl_nats},
            {"objective", s.objective},
            {"seconds", s.seconds}};
}

json train_epoch_json(const trainer::EpochStats& s) {
    return {{"epoch", s.epoch},
            {"loss", s.loss},
            {"test_acc", s.test_acc},
            {"lr", s.lr},
            {"seconds", s.seconds}};
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const Logger& log) {
    cfg.validate();

    StageContext ctx;
    ctx.out = cfg.out_dir;
    ctx.log = log;
    fs::create_directories(ctx.out);
    ctx.manifest.tool_version = kToolVersion;
    ctx.manifest.config_echo = cfg.to_json();
    if (fs::exists(ctx.out / "manifest.json")) {
        try {
            std::ifstream f(ctx.out / "manifest.json");
            json j;
            f >> j;
            ctx.previous = ExperimentManifest::from_json(j);
        } catch (const std::exception&) {
            ctx.previous = {};  // unreadable manifest: rerun everything
        }
    }

    // ---- dataset: generate into out/dataset, or ingest an existing dir ----
    const bool external = !cfg.dataset_path.empty();
    const fs::path data_dir = external ? fs::path(cfg.dataset_path) : ctx.out / "dataset";
    synth::Dataset ds;
    {
        StageRecord rec;
        rec.name = "dataset";
        json key;
        if (external) {
            try {
                key["meta"] = Sha256::hex_of_file((data_dir / "meta.json").string());
                key["images"] = Sha256::hex_of_file((data_dir / "images.bin").string());
                key["labels"] = Sha256::hex_of_file((data_dir / "labels.csv").string());
            } catch (const std::exception& e) {
                throw StageError(rec.name, e.what());
            }
        } else {
            key["spec"] = dataset_spec_to_json(cfg.dataset);
        }
        rec.key = Sha256::hex_of_string(key.dump());
        if (ctx.reuse(rec)) {
            try {
                ds = synth::load_dataset(data_dir.string());
            } catch (const std::exception& e) {
                throw StageError(rec.name, e.what());
            }
        } else {
            const auto t0 = Clock::now();
            try {
                if (external) {
                    ds = synth::load_dataset(data_dir.string());
                } else {
                    ds = synth::generate_dataset(cfg.dataset);
                    synth::save_dataset(ds, data_dir.string());
                    rec.artifacts.push_back(ctx.artifact("dataset/meta.json"));
                    rec.artifacts.push_back(ctx.artifact("dataset/images.bin"));
                    rec.artifacts.push_back(ctx.artifact("dataset/labels.csv"));
                }
                synth::save_annotations(split_annotations(ds.test, ds.spec.render),
                                        ds.spec.render.palette,
                                        (ctx.out / "test_annotations.csv").string());
                rec.artifacts.push_back(ctx.artifact("test_annotations.csv"));
            } catch (const StageError&) {
                throw;
            } catch (const std::exception& e) {
                throw StageError(rec.name, e.what());
            }
            rec.seconds = elapsed_seconds(t0);
            ctx.commit(rec);
        }
    }
    const std::string data_digest = Sha256::hex_of_file((data_dir / "images.bin").string());

    // ---- flow: resolve per run, train the shared one only when consumed ----
    std::vector<std::string> run_flow_path(cfg.runs.size());
    bool train_shared = false;
    for (std::size_t i = 0; i < cfg.runs.size(); ++i) {
        if (!trainer::method_needs_flow(cfg.runs[i].config.method)) continue;
        if (!cfg.runs[i].config.flow_checkpoint.empty())
            run_flow_path[i] = cfg.runs[i].config.flow_checkpoint;
        else if (!cfg.flow_checkpoint.empty())
            run_flow_path[i] = cfg.flow_checkpoint;
        else {
            run_flow_path[i] = (ctx.out / "flow.ckpt").string();
            train_shared = true;
        }
    }
    if (train_shared) {
        StageRecord rec;
        rec.name = "flow";
        flow::FlowArch arch = cfg.flow_arch;
        arch.height = ds.spec.render.height;
        arch.width = ds.spec.render.width;
        rec.key = Sha256::hex_of_string(json{{"arch", flow::arch_to_json(arch)},
                                             {"train", cfg.flow_train.to_json()},
                                             {"data", data_digest}}
                                            .dump());
        if (!ctx.reuse(rec)) {
            const auto t0 = Clock::now();
            try {
                arch.validate();
                flow::FlowModel model(arch);
                Rng init(cfg.flow_train.seed);
                model.init(init);
                std::vector<Image> images;
                images.reserve(ds.train.size());
                for (const auto& ex : ds.train) images.push_back(ex.image);
                json history = json::array();
                flow::train_flow(model, images, cfg.flow_train,
                                 [&](const flow::FlowEpochStats& s) {
                                     history.push_back(flow_epoch_json(s));
                                     char line[128];
                                     std::snprintf(line, sizeof line,
                                                   "[flow] epoch %d  bpd %.4f  kl %.4f", s.epoch,
                                                   s.bpd, s.kl_nats);
                                     ctx.say(line);
                                 });
                flow::save_checkpoint((ctx.out / "flow.ckpt").string(), model,
                                      cfg.flow_train.to_json());
                write_text(ctx.out / "flow_history.json",
                           json{{"train", cfg.flow_train.to_json()}, {"epochs", history}}
                                   .dump(2) +
                               "\n");
                rec.artifacts.push_back(ctx.artifact("flow.ckpt"));
                rec.artifacts.push_back(ctx.artifact("flow_history.json"));
            } catch (const std::exception& e) {
                throw StageError(rec.name, e.what());
            }
            rec.seconds = elapsed_seconds(t0);
            ctx.commit(rec);
        }
    }

    std::map<std::string, std::unique_ptr<flow::FlowModel>> flow_cache;
    auto flow_for = [&](std::size_t i) -> flow::FlowModel* {
        const std::string& path = run_flow_path[i];
        if (path.empty()) return nullptr;
        auto it = flow_cache.find(path);
        if (it == flow_cache.end())
            it = flow_cache.emplace(path, flow::load_checkpoint(path)).first;
        return it->second.get();
    };

    // ---- per-run train / predict / evaluate ----
    const auto tokens = class_tokens(ds.spec.render);
    const synth::Palette& palette = ds.spec.render.palette;
    std::vector<std::string> group_names;
    for (int g = 0; g < palette.index_count(); ++g) group_names.push_back(palette.name(g));

    std::map<std::string, std::string> superclasses;
    if (!cfg.superclass_map.empty()) superclasses = load_superclass_map(cfg.superclass_map);

    const std::string annotations_digest =
        Sha256::hex_of_file((ctx.out / "test_annotations.csv").string());
    const synth::AnnotationTable annotations =
        synth::load_annotations((ctx.out / "test_annotations.csv").string(), palette);

    std::vector<metrics::RunSummary> summaries;
    std::vector<FigureReport> figure_reports;

    for (std::size_t i = 0; i < cfg.runs.size(); ++i) {
        const RunPlan& run = cfg.runs[i];
        trainer::TrainConfig tc = run.config;
        tc.flow_checkpoint = run_flow_path[i];  // resolved path for the echo

        const std::string run_tag = "run" + std::to_string(i);
        const std::string dir_token = two_digits(i) + "_" + sanitize_label(run.label) + "_s" +
                                      std::to_string(tc.seed);
        const std::string rdir_rel = "runs/" + dir_token;
        const fs::path rdir = ctx.out / rdir_rel;

        {  // train
            StageRecord rec;
            rec.name = "train:" + run_tag + ":" + run.label + ":s" + std::to_string(tc.seed);
            json key{{"config", tc.to_json()},
                     {"base", cfg.classifier_base},
                     {"data", data_digest}};
            if (!run_flow_path[i].empty()) {
                try {
                    key["flow"] = Sha256::hex_of_file(run_flow_path[i]);
                } catch (const std::exception& e) {
                    throw StageError(rec.name, e.what());
                }
            }
            rec.key = Sha256::hex_of_string(key.dump());
            if (!ctx.reuse(rec)) {
                const auto t0 = Clock::now();
                try {
                    fs::create_directories(rdir);
                    flow::FlowModel* fl = flow_for(i);
                    trainer::ClassifierArch arch;
                    arch.num_classes = ds.spec.num_classes;
                    arch.base = cfg.classifier_base;
                    arch.height = ds.spec.render.height;
                    arch.width = ds.spec.render.width;
                    trainer::Classifier model(arch);
                    json history = json::array();
                    trainer::TrainCallbacks cbs;
                    cbs.on_epoch = [&](const trainer::EpochStats& s) {
                        history.push_back(train_epoch_json(s));
                        char line[160];
                        std::snprintf(line, sizeof line,
                                      "[%s] epoch %d  loss %.4f  test acc %.4f",
                                      rec.name.c_str(), s.epoch, s.loss, s.test_acc);
                        ctx.say(line);
                    };
                    const trainer::TrainResult result = trainer::train_classifier(
                        model, ds.train, ds.test, tc, fl, rdir.string(), cbs);
                    write_text(rdir / "history.json",
                               json{{"config", tc.to_json()},
                                    {"classifier_base", cfg.classifier_base},
                                    {"epochs", history},
                                    {"best_acc", result.best_acc},
                                    {"best_epoch", result.best_epoch},
                                    {"last_acc", result.last_acc}}
                                       .dump(2) +
                                   "\n");
                    rec.artifacts.push_back(ctx.artifact(rdir_rel + "/best.ckpt"));
                    rec.artifacts.push_back(ctx.artifact(rdir_rel + "/last.ckpt"));
                    rec.artifacts.push_back(ctx.artifact(rdir_rel + "/history.json"));
                } catch (const std::exception& e) {
                    throw StageError(rec.name, e.what());
                }
                rec.seconds = elapsed_seconds(t0);
                ctx.commit(rec);
            }
        }

        {  // predict
            StageRecord rec;
            rec.name = "predict:" + run_tag;
            try {
                rec.key = Sha256::hex_of_string(
                    json{{"model", Sha256::hex_of_file((rdir / "best.ckpt").string())},
                         {"data", data_digest}}
                        .dump());
            } catch (const std::exception& e) {
                throw StageError(rec.name, e.what());
            }
            if (!ctx.reuse(rec)) {
                const auto t0 = Clock::now();
                try {
                    auto model = trainer::load_classifier((rdir / "best.ckpt").string());
                    const std::vector<int> predicted = trainer::predict_labels(*model, ds.test);
                    metrics::save_predictions(prediction_rows(ds.test, predicted, tokens),
                                              (rdir / "predictions.csv").string());
                    rec.artifacts.push_back(ctx.artifact(rdir_rel + "/predictions.csv"));
                } catch (const std::exception& e) {
                    throw StageError(rec.name, e.what());
                }
                rec.seconds = elapsed_seconds(t0);
                ctx.commit(rec);
            }
        }

        {  // evaluate: the report is always rebuilt in memory (cheap), the
           // files are only rewritten when inputs changed
            StageRecord rec;
            rec.name = "evaluate:" + run_tag;
            metrics::DiscrepancyReport report;
            try {
                const std::string pred_digest =
                    Sha256::hex_of_file((rdir / "predictions.csv").string());
                json key{{"predictions", pred_digest},
                         {"annotations", annotations_digest},
                         {"include_others", cfg.include_others}};
                if (!superclasses.empty()) key["superclasses"] = json(superclasses);
                rec.key = Sha256::hex_of_string(key.dump());

                const auto predictions =
                    metrics::load_predictions((rdir / "predictions.csv").string());
                metrics::SubgroupAccuracyTable table = metrics::subgroup_accuracies(
                    predictions, annotations, palette.index_count(), palette.others_index());
                if (!superclasses.empty()) table = metrics::regroup(table, superclasses);
                report = metrics::discrepancy_report(table, cfg.include_others);
            } catch (const std::exception& e) {
                throw StageError(rec.name, e.what());
            }
            const metrics::RunSummary summary =
                metrics::make_run_summary(run.label, tc.seed, report);
            summaries.push_back(summary);
            figure_reports.push_back({dir_token, report});
            if (!ctx.reuse(rec)) {
                const auto t0 = Clock::now();
                try {
                    write_text(rdir / "report.json", report.to_json().dump(2) + "\n");
                    write_text(rdir / "report.csv", report.to_csv(group_names));
                    json run_json = summary.to_json();
                    run_json["label"] = run.label;
                    run_json["config_method"] = trainer::method_name(tc.method);
                    write_text(rdir / "run.json", run_json.dump(2) + "\n");
                    rec.artifacts.push_back(ctx.artifact(rdir_rel + "/report.json"));
                    rec.artifacts.push_back(ctx.artifact(rdir_rel + "/report.csv"));
                    rec.artifacts.push_back(ctx.artifact(rdir_rel + "/run.json"));
                } catch (const std::exception& e) {
                    throw StageError(rec.name, e.what());
                }
                rec.seconds = elapsed_seconds(t0);
                ctx.commit(rec);
            }
            char line[160];
            std::snprintf(line, sizeof line, "[%s] acc %.4f  macro_std %.4f  sigma_w %.4f",
                          rec.name.c_str(), summary.total_accuracy, summary.macro_std,
                          summary.weighted_std);
            ctx.say(line);
        }
    }

    {  // summary table across runs, config order
        StageRecord rec;
        rec.name = "summary";
        json rows = json::array();
        for (const auto& s : summaries) rows.push_back(s.to_json());
        rec.key = Sha256::hex_of_string(rows.dump());
        if (!ctx.reuse(rec)) {
            const auto t0 = Clock::now();
            try {
                write_text(ctx.out / "summary.csv", metrics::run_summary_csv(summaries, 4));
                json corr;  // accuracy-vs-spread association across runs
                corr["pearson"] = nullptr;
                corr["spearman"] = nullptr;
                if (summaries.size() >= 3) {
                    std::vector<double> acc, spread;
                    for (const auto& s : summaries) {
                        acc.push_back(s.total_accuracy);
                        spread.push_back(s.macro_std);
                    }
                    try {
                        corr["pearson"] =
                            metrics::correlation(acc, spread, metrics::CorrelationKind::pearson);
                        corr["spearman"] =
                            metrics::correlation(acc, spread, metrics::CorrelationKind::spearman);
                    } catch (const metrics::UndefinedCorrelationError&) {
                        // constant columns: leave nulls
                    }
                }
                write_text(ctx.out / "summary.json",
                           json{{"rows", rows}, {"accuracy_vs_macro_std", corr}}.dump(2) + "\n");
                rec.artifacts.push_back(ctx.artifact("summary.csv"));
                rec.artifacts.push_back(ctx.artifact("summary.json"));
            } catch (const std::exception& e) {
                throw StageError(rec.name, e.what());
            }
            rec.seconds = elapsed_seconds(t0);
            ctx.commit(rec);
        }
    }

    if (cfg.figures) {
        StageRecord rec;
        rec.name = "figures";
        json key = json::array();
        for (const auto& fr : figure_reports)
            key.push_back({{"label", fr.label}, {"report", fr.report.to_json()}});
        rec.key = Sha256::hex_of_string(json{{"reports", key}, {"groups", group_names}}.dump());
        if (!ctx.reuse(rec)) {
            const auto t0 = Clock::now();
            try {
                const auto paths =
                    emit_figures(figure_reports, (ctx.out / "figures").string(), group_names,
                                 [&](const std::string& s) { ctx.say(s); });
                for (const auto& p : paths)
                    rec.artifacts.push_back(
                        ctx.artifact("figures/" + fs::path(p).filename().string()));
            } catch (const std::exception& e) {
                throw StageError(rec.name, e.what());
            }
            rec.seconds = elapsed_seconds(t0);
            ctx.commit(rec);
        }
    }

    ExperimentResult result;
    result.manifest = ctx.manifest;
    result.summaries = summaries;
    return result;
}

}  // namespace flowlab::cli
