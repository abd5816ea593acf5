// flowlab command-line tool: dataset generation, flow training, semantic
// augmentation, classifier training, prediction, subgroup evaluation, and the
// full config-driven pipeline.
//
// Exit codes: 0 success, 1 validation error (bad flags/config/inputs),
// 2 stage failure (a validated pipeline step failed while running).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "flowlab/aug/transforms.hpp"
#include "flowlab/cli/config.hpp"
#include "flowlab/cli/figures.hpp"
#include "flowlab/cli/stages.hpp"
#include "flowlab/core/sha256.hpp"
#include "flowlab/core/version.hpp"
#include "flowlab/flow/checkpoint.hpp"
#include "flowlab/flow/train.hpp"
#include "flowlab/metrics/discrepancy.hpp"
#include "flowlab/metrics/predictions.hpp"
#include "flowlab/synth/annotations.hpp"
#include "flowlab/synth/dataset.hpp"
#include "flowlab/trainer/classifier.hpp"
#include "flowlab/trainer/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace flowlab;

namespace {

void say(const std::string& s) { std::cout << s << "\n"; }

std::string fixed4(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw cli::ConfigError("config: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw cli::ConfigError("config: " + path + " is not valid JSON: " + e.what());
    }
    return j;
}

/// Accepts either a bare section object or a full experiment config holding
/// the section under `name`.
json config_section(const json& j, const char* name) {
    if (j.is_object() && j.contains(name) && j.at(name).is_object()) return j.at(name);
    return j;
}

void require(bool ok, const std::string& message) {
    if (!ok) throw cli::ConfigError(message);
}

void write_text_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << text;
    if (!f.good()) throw std::runtime_error("failed writing " + path.string());
}

// Shared global flags; subcommand-specific options live on each subcommand.
struct GlobalArgs {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
};

// ---------------------------------------------------------------------------
// generate-data
// ---------------------------------------------------------------------------

struct GenerateArgs {
    std::optional<int> classes, n_train, n_test, height, width, palette_colors;
    std::optional<double> rho;
};

int cmd_generate_data(const GlobalArgs& g, const GenerateArgs& a) {
    json j = g.config.empty() ? json::object()
                              : config_section(load_json_file(g.config), "dataset");
    if (j.contains("path"))
        throw cli::ConfigError(
            "generate-data: config names an existing dataset path; nothing to generate");
    if (a.classes) j["num_classes"] = *a.classes;
    if (a.n_train) j["n_train"] = *a.n_train;
    if (a.n_test) j["n_test"] = *a.n_test;
    if (a.rho) j["rho"] = *a.rho;
    if (a.height) j["height"] = *a.height;
    if (a.width) j["width"] = *a.width;
    if (a.palette_colors) j["palette_colors"] = *a.palette_colors;
    if (g.seed) j["seed"] = *g.seed;
    require(!g.out.empty(), "generate-data: --out <dir> is required");

    synth::DatasetSpec spec = cli::dataset_spec_from_json(j);
    spec.validate();
    const synth::Dataset ds = synth::generate_dataset(spec);
    synth::save_dataset(ds, g.out);
    synth::save_annotations(cli::split_annotations(ds.test, ds.spec.render),
                            ds.spec.render.palette,
                            (fs::path(g.out) / "test_annotations.csv").string());
    say("wrote " + std::to_string(ds.train.size()) + " train + " +
        std::to_string(ds.test.size()) + " test examples (" +
        std::to_string(spec.num_classes) + " classes, " +
        std::to_string(spec.render.palette.size()) + " color groups, rho " +
        fixed4(spec.rho) + ") to " + g.out);
    return 0;
}

// ---------------------------------------------------------------------------
// train-flow
// ---------------------------------------------------------------------------

struct TrainFlowArgs {
    std::string data;
    std::optional<int> epochs, dz, blocks, coupling_width, encoder_base;
    std::optional<double> lr, beta, warmup_frac;
};

int cmd_train_flow(const GlobalArgs& g, const TrainFlowArgs& a) {
    require(!a.data.empty(), "train-flow: --data <dataset dir> is required");
    require(!g.out.empty(), "train-flow: --out <checkpoint path> is required");
    json fj = g.config.empty() ? json::object()
                               : config_section(load_json_file(g.config), "flow");
    json aj = fj.value("arch", json::object());
    json tj = fj.value("train", json::object());
    if (a.dz) aj["dz"] = *a.dz;
    if (a.blocks) aj["blocks"] = *a.blocks;
    if (a.coupling_width) aj["coupling_width"] = *a.coupling_width;
    if (a.encoder_base) aj["encoder_base"] = *a.encoder_base;
    if (a.epochs) tj["epochs"] = *a.epochs;
    if (a.lr) tj["lr"] = *a.lr;
    if (a.beta) tj["beta"] = *a.beta;
    if (a.warmup_frac) tj["warmup_frac"] = *a.warmup_frac;
    if (g.seed) tj["seed"] = *g.seed;

    flow::FlowArch arch = cli::flow_arch_from_json(aj);
    const flow::FlowTrainConfig tc = cli::flow_train_config_from_json(tj);

    const synth::Dataset ds = synth::load_dataset(a.data);
    arch.height = ds.spec.render.height;
    arch.width = ds.spec.render.width;
    arch.validate();

    flow::FlowModel model(arch);
    Rng init(tc.seed);
    model.init(init);
    std::vector<Image> images;
    images.reserve(ds.train.size());
    for (const auto& ex : ds.train) images.push_back(ex.image);

    json history = json::array();
    flow::train_flow(model, images, tc, [&](const flow::FlowEpochStats& s) {
        history.push_back({{"epoch", s.epoch},
                           {"bpd", s.bpd},
                           {"kl_nats", s.kl_nats},
                           {"objective", s.objective},
                           {"seconds", s.seconds}});
        say("epoch " + std::to_string(s.epoch) + "  bpd " + fixed4(s.bpd) + "  kl " +
            fixed4(s.kl_nats));
    });
    if (fs::path(g.out).has_parent_path())
        fs::create_directories(fs::path(g.out).parent_path());
    flow::save_checkpoint(g.out, model, tc.to_json());
    write_text_file(g.out + ".history.json",
                    json{{"train", tc.to_json()}, {"epochs", history}}.dump(2) + "\n");
    const double final_bpd = history.empty() ? 0.0 : history.back().at("bpd").get<double>();
    say("saved flow checkpoint to " + g.out + " (final bpd " + fixed4(final_bpd) + ")");
    return 0;
}

// ---------------------------------------------------------------------------
// augment
// ---------------------------------------------------------------------------

struct AugmentArgs {
    std::string flow, in, method = "gaussian", target = "z", dist = "trunc-gaussian";
    double mu = 0.0, sigma = 0.1, bound = 4.0, lo = -0.2, hi = 0.2, alpha = 1.0, tr = 0.5;
    bool clamp_result = false;
    int k_per_source = 1;
    std::optional<std::size_t> count;
};

int cmd_augment(const GlobalArgs& g, const AugmentArgs& a) {
    require(!a.flow.empty(), "augment: --flow <checkpoint> is required");
    require(!a.in.empty(), "augment: --in <dataset dir> is required");
    require(!g.out.empty(), "augment: --out <dir> is required");

    aug::AugmentationSpec spec;
    if (a.method == "gaussian")
        spec.method = aug::AugmentationSpec::Method::gaussian;
    else if (a.method == "mix")
        spec.method = aug::AugmentationSpec::Method::mix;
    else
        throw cli::ConfigError("augment: unknown method \"" + a.method +
                               "\" (expected gaussian or mix)");
    if (a.dist == "trunc-gaussian")
        spec.perturb.dist = aug::PerturbSpec::Dist::trunc_gaussian;
    else if (a.dist == "uniform")
        spec.perturb.dist = aug::PerturbSpec::Dist::uniform;
    else
        throw cli::ConfigError("augment: unknown dist \"" + a.dist +
                               "\" (expected trunc-gaussian or uniform)");
    const aug::Target target = aug::target_from_name(a.target);
    spec.perturb.mu = a.mu;
    spec.perturb.sigma = a.sigma;
    spec.perturb.bound = a.bound;
    spec.perturb.lo = a.lo;
    spec.perturb.hi = a.hi;
    spec.perturb.clamp_result = a.clamp_result;
    spec.perturb.target = target;
    spec.mix.alpha = a.alpha;
    spec.mix.tr = a.tr;
    spec.mix.target = target;
    spec.k_per_source = a.k_per_source;
    spec.seed = g.seed.value_or(1);

    const synth::Dataset ds = synth::load_dataset(a.in);
    spec.count = a.count.value_or(ds.train.size());
    spec.validate();
    require(fs::exists(a.flow), "augment: flow checkpoint does not exist: " + a.flow);
    const auto model = flow::load_checkpoint(a.flow);

    const auto batch = aug::augment_batch(*model, ds.train, spec);

    // The perturbed backgrounds no longer match any palette color region, so
    // every output is annotated with the catch-all group.
    synth::Dataset out_ds;
    out_ds.spec = ds.spec;
    out_ds.spec.n_train = static_cast<int>(batch.size());
    out_ds.spec.n_test = 0;
    const int others = ds.spec.render.palette.others_index();
    out_ds.train.reserve(batch.size());
    for (const auto& li : batch) out_ds.train.push_back({li.image, li.class_label, others});
    synth::save_dataset(out_ds, g.out);
    write_text_file(fs::path(g.out) / "provenance.json",
                    json{{"source", a.in},
                         {"source_images_sha256",
                          Sha256::hex_of_file((fs::path(a.in) / "images.bin").string())},
                         {"flow", a.flow},
                         {"flow_sha256", Sha256::hex_of_file(a.flow)},
                         {"spec", spec.to_json()}}
                            .dump(2) +
                        "\n");
    say("wrote " + std::to_string(batch.size()) + " augmented examples to " + g.out);
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string data, flow, method;
    std::optional<int> epochs, batch, base;
};

int cmd_train(const GlobalArgs& g, const TrainArgs& a) {
    require(!a.data.empty(), "train: --data <dataset dir> is required");
    require(!g.out.empty(), "train: --out <dir> is required");
    json j = g.config.empty() ? json::object() : load_json_file(g.config);
    if (!a.method.empty()) j["method"] = a.method;
    if (a.epochs) j["epochs"] = *a.epochs;
    if (a.batch) j["batch"] = *a.batch;
    if (!a.flow.empty()) j["flow_checkpoint"] = a.flow;
    if (g.seed) j["seed"] = *g.seed;
    if (!j.contains("method")) throw cli::ConfigError("train: --method or a config is required");

    const trainer::TrainConfig tc = trainer::train_config_from_json(j);
    tc.validate();
    std::unique_ptr<flow::FlowModel> fl;
    if (trainer::method_needs_flow(tc.method)) {
        require(!tc.flow_checkpoint.empty(),
                "train: method " + trainer::method_name(tc.method) +
                    " transforms batches through a flow; pass --flow or set flow_checkpoint");
        require(fs::exists(tc.flow_checkpoint),
                "train: flow checkpoint does not exist: " + tc.flow_checkpoint);
        fl = flow::load_checkpoint(tc.flow_checkpoint);
    }

    const synth::Dataset ds = synth::load_dataset(a.data);
    trainer::ClassifierArch arch;
    arch.num_classes = ds.spec.num_classes;
    arch.base = a.base.value_or(32);
    arch.height = ds.spec.render.height;
    arch.width = ds.spec.render.width;
    trainer::Classifier model(arch);

    json history = json::array();
    trainer::TrainCallbacks cbs;
    cbs.on_epoch = [&](const trainer::EpochStats& s) {
        history.push_back({{"epoch", s.epoch},
                           {"loss", s.loss},
                           {"test_acc", s.test_acc},
                           {"lr", s.lr},
                           {"seconds", s.seconds}});
        say("epoch " + std::to_string(s.epoch) + "  loss " + fixed4(s.loss) + "  test acc " +
            fixed4(s.test_acc));
    };
    const trainer::TrainResult result =
        trainer::train_classifier(model, ds.train, ds.test, tc, fl.get(), g.out, cbs);
    write_text_file(fs::path(g.out) / "history.json",
                    json{{"config", tc.to_json()},
                         {"classifier_base", arch.base},
                         {"epochs", history},
                         {"best_acc", result.best_acc},
                         {"best_epoch", result.best_epoch},
                         {"last_acc", result.last_acc}}
                            .dump(2) +
                        "\n");
    say("best acc " + fixed4(result.best_acc) + " (epoch " + std::to_string(result.best_epoch) +
        "), last acc " + fixed4(result.last_acc) + "; checkpoints in " + g.out);
    return 0;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

struct PredictArgs {
    std::string checkpoint, data, split = "test";
};

int cmd_predict(const GlobalArgs& g, const PredictArgs& a) {
    require(!a.checkpoint.empty(), "predict: --checkpoint <file> is required");
    require(!a.data.empty(), "predict: --data <dataset dir> is required");
    require(!g.out.empty(), "predict: --out <csv path> is required");
    require(a.split == "test" || a.split == "train",
            "predict: --split must be test or train (got \"" + a.split + "\")");
    require(fs::exists(a.checkpoint),
            "predict: checkpoint does not exist: " + a.checkpoint);

    const auto model = trainer::load_classifier(a.checkpoint);
    const synth::Dataset ds = synth::load_dataset(a.data);
    const auto& split = a.split == "test" ? ds.test : ds.train;
    const std::vector<int> predicted = trainer::predict_labels(*model, split);
    const auto rows =
        cli::prediction_rows(split, predicted, cli::class_tokens(ds.spec.render));
    if (fs::path(g.out).has_parent_path())
        fs::create_directories(fs::path(g.out).parent_path());
    metrics::save_predictions(rows, g.out);
    std::size_t correct = 0;
    for (const auto& r : rows)
        if (r.correct()) ++correct;
    const double acc = rows.empty() ? 0.0 : static_cast<double>(correct) / rows.size();
    say("wrote " + std::to_string(rows.size()) + " predictions (" + a.split + " accuracy " +
        fixed4(acc) + ") to " + g.out);
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateArgs {
    std::string predictions, annotations, data, superclass;
    bool exclude_others = false;
};

int cmd_evaluate(const GlobalArgs& g, const EvaluateArgs& a) {
    require(!a.predictions.empty(), "evaluate: --predictions <csv> is required");
    require(!a.annotations.empty(), "evaluate: --annotations <csv> is required");

    const synth::Palette palette = a.data.empty()
                                       ? synth::Palette::default_palette()
                                       : synth::load_dataset(a.data).spec.render.palette;
    const auto annotations = synth::load_annotations(a.annotations, palette);
    const auto predictions = metrics::load_predictions(a.predictions);
    metrics::SubgroupAccuracyTable table = metrics::subgroup_accuracies(
        predictions, annotations, palette.index_count(), palette.others_index());
    if (!a.superclass.empty())
        table = metrics::regroup(table, cli::load_superclass_map(a.superclass));
    const metrics::DiscrepancyReport report =
        metrics::discrepancy_report(table, !a.exclude_others);

    std::vector<std::string> group_names;
    for (int gi = 0; gi < palette.index_count(); ++gi) group_names.push_back(palette.name(gi));

    if (g.out.empty()) {
        std::cout << report.to_csv(group_names);
    } else {
        fs::create_directories(g.out);
        write_text_file(fs::path(g.out) / "report.json", report.to_json().dump(2) + "\n");
        write_text_file(fs::path(g.out) / "report.csv", report.to_csv(group_names));
        say("wrote report.json and report.csv to " + g.out);
    }
    say("total_accuracy " + fixed4(report.total_accuracy) + "  macro_std " +
        fixed4(report.macro_std) + "  weighted_std " + fixed4(report.overall_weighted_std));
    return 0;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct ReportArgs {
    std::string data;
    bool no_figures = false;
};

metrics::SubgroupAccuracyTable table_from_report_json(const json& j) {
    metrics::SubgroupAccuracyTable table;
    table.group_count = j.value("group_count", -1);
    table.others_group = j.value("others_group", -1);
    for (const auto& cell : j.at("cells"))
        table.cells[cell.at("class").get<std::string>()][cell.at("group").get<int>()] = {
            cell.at("count").get<long long>(), cell.at("accuracy").get<double>()};
    return table;
}

int cmd_report(const GlobalArgs& g, const ReportArgs& a) {
    require(!g.out.empty(), "report: --out <experiment dir> is required");
    const fs::path runs_dir = fs::path(g.out) / "runs";
    require(fs::is_directory(runs_dir),
            "report: no runs directory under " + g.out);

    std::vector<fs::path> run_dirs;
    for (const auto& entry : fs::directory_iterator(runs_dir))
        if (entry.is_directory() && fs::exists(entry.path() / "run.json") &&
            fs::exists(entry.path() / "report.json"))
            run_dirs.push_back(entry.path());
    std::sort(run_dirs.begin(), run_dirs.end());
    require(!run_dirs.empty(), "report: no completed runs under " + runs_dir.string());

    std::vector<metrics::RunSummary> summaries;
    std::vector<cli::FigureReport> figures;
    for (const auto& dir : run_dirs) {
        const json run_json = load_json_file((dir / "run.json").string());
        const json report_json = load_json_file((dir / "report.json").string());
        const auto table = table_from_report_json(report_json);
        const metrics::DiscrepancyReport report =
            metrics::discrepancy_report(table, report_json.value("include_others", true));
        summaries.push_back(metrics::make_run_summary(
            run_json.at("method").get<std::string>(), run_json.at("seed").get<std::uint64_t>(),
            report));
        figures.push_back({dir.filename().string(), report});
    }

    write_text_file(fs::path(g.out) / "summary.csv", metrics::run_summary_csv(summaries, 4));
    json rows = json::array();
    for (const auto& s : summaries) rows.push_back(s.to_json());
    json corr;
    corr["pearson"] = nullptr;
    corr["spearman"] = nullptr;
    if (summaries.size() >= 3) {
        std::vector<double> acc, spread;
        for (const auto& s : summaries) {
            acc.push_back(s.total_accuracy);
            spread.push_back(s.macro_std);
        }
        try {
            corr["pearson"] = metrics::correlation(acc, spread, metrics::CorrelationKind::pearson);
            corr["spearman"] =
                metrics::correlation(acc, spread, metrics::CorrelationKind::spearman);
        } catch (const metrics::UndefinedCorrelationError&) {
        }
    }
    write_text_file(fs::path(g.out) / "summary.json",
                    json{{"rows", rows}, {"accuracy_vs_macro_std", corr}}.dump(2) + "\n");

    std::vector<std::string> group_names;
    if (!a.data.empty()) {
        const synth::Palette palette = synth::load_dataset(a.data).spec.render.palette;
        for (int gi = 0; gi < palette.index_count(); ++gi)
            group_names.push_back(palette.name(gi));
    }
    if (!a.no_figures)
        cli::emit_figures(figures, (fs::path(g.out) / "figures").string(), group_names,
                          [](const std::string& s) { say(s); });

    std::ifstream csv(fs::path(g.out) / "summary.csv");
    std::cout << csv.rdbuf();
    return 0;
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

int cmd_run(const GlobalArgs& g) {
    require(!g.config.empty(), "run: --config <experiment json> is required");
    cli::ExperimentConfig cfg = cli::load_experiment_config(g.config);
    if (!g.out.empty()) cfg.out_dir = g.out;
    if (g.seed) cfg.dataset.seed = *g.seed;  // generation seed; run seeds stay explicit
    const cli::ExperimentResult result =
        cli::run_experiment(cfg, [](const std::string& s) { say(s); });
    std::ifstream csv(fs::path(cfg.out_dir) / "summary.csv");
    std::cout << csv.rdbuf();
    say("manifest: " + (fs::path(cfg.out_dir) / "manifest.json").string() + " (" +
        std::to_string(result.manifest.stages.size()) + " stages)");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flowlab: semantic augmentation via decoupled flows, with "
                 "subgroup-discrepancy evaluation"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);

    GlobalArgs g;
    app.add_option("--config", g.config, "JSON config file");
    app.add_option("--out", g.out, "Output directory or file");
    app.add_option("--seed", g.seed, "Seed override");

    auto* gen = app.add_subcommand("generate-data", "Generate a synthetic dataset directory");
    gen->fallthrough();
    GenerateArgs gen_args;
    gen->add_option("--classes", gen_args.classes, "Number of classes");
    gen->add_option("--n-train", gen_args.n_train, "Training examples");
    gen->add_option("--n-test", gen_args.n_test, "Test examples (multiple of classes x colors)");
    gen->add_option("--rho", gen_args.rho, "P(train background = class color)");
    gen->add_option("--height", gen_args.height, "Image height");
    gen->add_option("--width", gen_args.width, "Image width");
    gen->add_option("--palette-colors", gen_args.palette_colors,
                    "Use the first N default background color groups");

    auto* tflow = app.add_subcommand("train-flow", "Train the decoupled flow on a dataset");
    tflow->fallthrough();
    TrainFlowArgs tflow_args;
    tflow->add_option("--data", tflow_args.data, "Dataset directory");
    tflow->add_option("--epochs", tflow_args.epochs, "Training epochs");
    tflow->add_option("--lr", tflow_args.lr, "Adam step size");
    tflow->add_option("--beta", tflow_args.beta, "Final KL weight");
    tflow->add_option("--warmup-frac", tflow_args.warmup_frac, "KL warmup fraction");
    tflow->add_option("--dz", tflow_args.dz, "Global code dimension");
    tflow->add_option("--blocks", tflow_args.blocks, "Coupling blocks");
    tflow->add_option("--coupling-width", tflow_args.coupling_width,
                      "Hidden channels per coupling net");
    tflow->add_option("--encoder-base", tflow_args.encoder_base, "Encoder base width");

    auto* augc = app.add_subcommand("augment", "Write flow-augmented copies of a dataset");
    augc->fallthrough();
    AugmentArgs aug_args;
    augc->add_option("--flow", aug_args.flow, "Flow checkpoint");
    augc->add_option("--in", aug_args.in, "Source dataset directory");
    augc->add_option("--method", aug_args.method, "gaussian | mix");
    augc->add_option("--target", aug_args.target, "z | nu (which code to act on)");
    augc->add_option("--dist", aug_args.dist, "trunc-gaussian | uniform");
    augc->add_option("--mu", aug_args.mu, "Perturbation mean");
    augc->add_option("--sigma", aug_args.sigma, "Perturbation std");
    augc->add_option("--bound", aug_args.bound, "Truncation bound");
    augc->add_option("--lo", aug_args.lo, "Uniform low");
    augc->add_option("--hi", aug_args.hi, "Uniform high");
    augc->add_flag("--clamp-result", aug_args.clamp_result,
                   "Clamp perturbed code to [-bound, bound]");
    augc->add_option("--alpha", aug_args.alpha, "Beta(alpha, alpha) for mix");
    augc->add_option("--tr", aug_args.tr, "Mix flip threshold");
    augc->add_option("--k", aug_args.k_per_source, "Transforms per source image");
    augc->add_option("--count", aug_args.count, "Total outputs (default: one per source)");

    auto* trainc = app.add_subcommand("train", "Train a classifier under one method");
    trainc->fallthrough();
    TrainArgs train_args;
    trainc->add_option("--data", train_args.data, "Dataset directory");
    trainc->add_option("--method", train_args.method, "Training method");
    trainc->add_option("--epochs", train_args.epochs, "Epochs");
    trainc->add_option("--batch", train_args.batch, "Batch size");
    trainc->add_option("--base", train_args.base, "Classifier base width");
    trainc->add_option("--flow", train_args.flow, "Flow checkpoint for flow methods");

    auto* predc = app.add_subcommand("predict", "Write a predictions CSV from a checkpoint");
    predc->fallthrough();
    PredictArgs pred_args;
    predc->add_option("--checkpoint", pred_args.checkpoint, "Classifier checkpoint");
    predc->add_option("--data", pred_args.data, "Dataset directory");
    predc->add_option("--split", pred_args.split, "test | train");

    auto* evalc = app.add_subcommand("evaluate", "Subgroup-discrepancy report from CSVs");
    evalc->fallthrough();
    EvaluateArgs eval_args;
    evalc->add_option("--predictions", eval_args.predictions, "Predictions CSV");
    evalc->add_option("--annotations", eval_args.annotations, "Annotations CSV");
    evalc->add_option("--data", eval_args.data, "Dataset directory naming the palette");
    evalc->add_option("--superclass", eval_args.superclass, "class,superclass CSV");
    evalc->add_flag("--exclude-others", eval_args.exclude_others,
                    "Drop catch-all background cells from the metrics");

    auto* repc = app.add_subcommand("report", "Rebuild summary and figures from run artifacts");
    repc->fallthrough();
    ReportArgs rep_args;
    repc->add_option("--data", rep_args.data, "Dataset directory naming the palette");
    repc->add_flag("--no-figures", rep_args.no_figures, "Skip figure emission");

    auto* runc = app.add_subcommand("run", "Full pipeline from an experiment config");
    runc->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) return cmd_generate_data(g, gen_args);
        if (tflow->parsed()) return cmd_train_flow(g, tflow_args);
        if (augc->parsed()) return cmd_augment(g, aug_args);
        if (trainc->parsed()) return cmd_train(g, train_args);
        if (predc->parsed()) return cmd_predict(g, pred_args);
        if (evalc->parsed()) return cmd_evaluate(g, eval_args);
        if (repc->parsed()) return cmd_report(g, rep_args);
        if (runc->parsed()) return cmd_run(g);
    } catch (const cli::StageError& e) {
        std::cerr << "stage failed: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {  // ConfigError and validation
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "failed: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
