#include "flowlab/cli/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "flowlab/synth/palette.hpp"

namespace flowlab::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void require_keys(const json& j, const std::set<std::string>& allowed,
                  const std::string& context) {
    if (!j.is_object()) throw ConfigError("config: " + context + " must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (!allowed.count(key))
            throw ConfigError("config: unknown key \"" + key + "\" in " + context);
    }
}

const std::set<std::string> kRunKeys = {
    "method", "alpha",        "cutout_size",  "cutout_fill",     "lambda",
    "lambda1", "lambda2",     "plus_std_transform", "gauss",     "mix",
    "k_per_source", "inline_aug", "flow_checkpoint", "epochs",   "batch",
    "lr",      "momentum",    "weight_decay", "seed",            "seeds",
    "label"};

void check_exists(const std::string& path, const std::string& what) {
    if (!fs::exists(path))
        throw ConfigError("config: " + what + " does not exist: " + path);
}

}  // namespace

synth::DatasetSpec dataset_spec_from_json(const json& j) {
    require_keys(j, {"num_classes", "n_train", "n_test", "rho", "seed", "height", "width",
                     "palette_colors"},
                 "dataset");
    const int classes = j.value("num_classes", 4);
    synth::DatasetSpec spec = synth::DatasetSpec::defaults(classes);
    spec.n_train = j.value("n_train", spec.n_train);
    spec.n_test = j.value("n_test", spec.n_test);
    spec.rho = j.value("rho", spec.rho);
    spec.seed = j.value("seed", spec.seed);
    spec.render.height = j.value("height", spec.render.height);
    spec.render.width = j.value("width", spec.render.width);
    if (j.contains("palette_colors")) {
        const int n = j.at("palette_colors").get<int>();
        const synth::Palette full = synth::Palette::default_palette();
        const auto& all = full.groups();
        if (n < 1 || n > static_cast<int>(all.size()))
            throw ConfigError("config: palette_colors must be in [1, " +
                              std::to_string(all.size()) + "]");
        spec.render.palette = synth::Palette(std::vector<synth::ColorGroup>(
            all.begin(), all.begin() + n));
    }
    return spec;
}

json dataset_spec_to_json(const synth::DatasetSpec& spec) {
    return {{"num_classes", spec.num_classes},
            {"n_train", spec.n_train},
            {"n_test", spec.n_test},
            {"rho", spec.rho},
            {"seed", spec.seed},
            {"height", spec.render.height},
            {"width", spec.render.width},
            {"palette_colors", spec.render.palette.size()}};
}

flow::FlowArch flow_arch_from_json(const json& j) {
    if (j.contains("height") || j.contains("width"))
        throw ConfigError("config: flow arch image size comes from the dataset; "
                          "remove height/width");
    require_keys(j, {"dz", "blocks", "coupling_width", "encoder_base", "squeeze_eps",
                     "scale_cap"},
                 "flow.arch");
    flow::FlowArch arch;
    arch.dz = j.value("dz", arch.dz);
    arch.blocks = j.value("blocks", arch.blocks);
    arch.coupling_width = j.value("coupling_width", arch.coupling_width);
    arch.encoder_base = j.value("encoder_base", arch.encoder_base);
    arch.squeeze_eps = j.value("squeeze_eps", arch.squeeze_eps);
    arch.scale_cap = j.value("scale_cap", arch.scale_cap);
    return arch;
}

flow::FlowTrainConfig flow_train_config_from_json(const json& j) {
    require_keys(j, {"epochs", "lr", "beta", "warmup_frac", "divergence_bpd", "seed"},
                 "flow.train");
    flow::FlowTrainConfig cfg;
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.lr = j.value("lr", cfg.lr);
    cfg.beta = j.value("beta", cfg.beta);
    cfg.warmup_frac = j.value("warmup_frac", cfg.warmup_frac);
    cfg.divergence_bpd = j.value("divergence_bpd", cfg.divergence_bpd);
    cfg.seed = j.value("seed", cfg.seed);
    return cfg;
}

bool ExperimentConfig::needs_flow() const {
    for (const auto& run : runs)
        if (trainer::method_needs_flow(run.config.method)) return true;
    return false;
}

void ExperimentConfig::validate() const {
    if (out_dir.empty())
        throw ConfigError("config: out_dir is required (set it or pass --out)");
    if (!dataset_path.empty()) {
        check_exists(dataset_path, "dataset path");
        check_exists((fs::path(dataset_path) / "meta.json").string(),
                     "dataset meta.json under dataset path");
    } else {
        dataset.validate();
    }
    if (!flow_checkpoint.empty()) check_exists(flow_checkpoint, "flow checkpoint");
    if (classifier_base < 1) throw ConfigError("config: classifier base must be >= 1");
    if (runs.empty()) throw ConfigError("config: at least one run is required");
    for (std::size_t i = 0; i < runs.size(); ++i) {
        try {
            runs[i].config.validate();
        } catch (const std::exception& e) {
            throw ConfigError("config: runs[" + std::to_string(i) + "] (" + runs[i].label +
                              "): " + e.what());
        }
        if (!runs[i].config.flow_checkpoint.empty())
            check_exists(runs[i].config.flow_checkpoint,
                         "runs[" + std::to_string(i) + "] flow checkpoint");
    }
    std::set<std::pair<std::string, std::uint64_t>> seen;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        if (!seen.emplace(runs[i].label, runs[i].config.seed).second)
            throw ConfigError("config: runs[" + std::to_string(i) + "]: label \"" +
                              runs[i].label + "\" with seed " +
                              std::to_string(runs[i].config.seed) +
                              " appears twice; give one entry a distinct label");
    }
    if (!superclass_map.empty()) check_exists(superclass_map, "superclass map");
}

ExperimentConfig experiment_config_from_json(const json& j) {
    require_keys(j, {"out_dir", "dataset", "flow", "classifier", "train_defaults", "runs",
                     "evaluation", "figures"},
                 "experiment config");
    ExperimentConfig cfg;
    cfg.out_dir = j.value("out_dir", "");

    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        if (d.contains("path")) {
            require_keys(d, {"path"}, "dataset (path form)");
            cfg.dataset_path = d.at("path").get<std::string>();
        } else {
            cfg.dataset = dataset_spec_from_json(d);
        }
    }

    if (j.contains("flow")) {
        const json& f = j.at("flow");
        if (f.contains("checkpoint")) {
            require_keys(f, {"checkpoint"}, "flow (checkpoint form)");
            cfg.flow_checkpoint = f.at("checkpoint").get<std::string>();
        } else {
            require_keys(f, {"arch", "train"}, "flow");
            if (f.contains("arch")) cfg.flow_arch = flow_arch_from_json(f.at("arch"));
            if (f.contains("train"))
                cfg.flow_train = flow_train_config_from_json(f.at("train"));
        }
    }

    if (j.contains("classifier")) {
        require_keys(j.at("classifier"), {"base"}, "classifier");
        cfg.classifier_base = j.at("classifier").value("base", cfg.classifier_base);
    }

    json defaults = json::object();
    if (j.contains("train_defaults")) {
        require_keys(j.at("train_defaults"), kRunKeys, "train_defaults");
        defaults = j.at("train_defaults");
        if (defaults.contains("seeds") || defaults.contains("label"))
            throw ConfigError("config: seeds and label belong to runs[] entries, "
                              "not train_defaults");
    }

    if (!j.contains("runs") || !j.at("runs").is_array())
        throw ConfigError("config: runs must be an array of training jobs");
    std::size_t entry_index = 0;
    for (const json& entry : j.at("runs")) {
        const std::string where = "runs[" + std::to_string(entry_index) + "]";
        require_keys(entry, kRunKeys, where);
        if (!entry.contains("method"))
            throw ConfigError("config: " + where + " needs a method");

        std::vector<std::uint64_t> seeds;
        if (entry.contains("seeds")) {
            if (entry.contains("seed"))
                throw ConfigError("config: " + where + " has both seed and seeds");
            for (const auto& s : entry.at("seeds")) seeds.push_back(s.get<std::uint64_t>());
            if (seeds.empty())
                throw ConfigError("config: " + where + " has an empty seeds list");
        } else if (entry.contains("seed")) {
            seeds.push_back(entry.at("seed").get<std::uint64_t>());
        } else {
            throw ConfigError("config: " + where +
                              " must name its seed(s) explicitly (seed or seeds)");
        }

        json merged = defaults;
        for (const auto& [key, value] : entry.items()) {
            if (key == "seeds" || key == "label") continue;
            merged[key] = value;
        }
        const std::string label =
            entry.value("label", merged.at("method").get<std::string>());

        for (std::uint64_t seed : seeds) {
            merged["seed"] = seed;
            RunPlan plan;
            plan.label = label;
            try {
                plan.config = trainer::train_config_from_json(merged);
            } catch (const std::exception& e) {
                throw ConfigError("config: " + where + ": " + e.what());
            }
            cfg.runs.push_back(std::move(plan));
        }
        ++entry_index;
    }

    if (j.contains("evaluation")) {
        const json& e = j.at("evaluation");
        require_keys(e, {"include_others", "superclass_map"}, "evaluation");
        cfg.include_others = e.value("include_others", cfg.include_others);
        cfg.superclass_map = e.value("superclass_map", cfg.superclass_map);
    }
    cfg.figures = j.value("figures", cfg.figures);
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config: " + path + " is not valid JSON: " + e.what());
    }
    return experiment_config_from_json(j);
}

json ExperimentConfig::to_json() const {
    json j;
    j["out_dir"] = out_dir;
    if (!dataset_path.empty())
        j["dataset"] = {{"path", dataset_path}};
    else
        j["dataset"] = dataset_spec_to_json(dataset);
    if (!flow_checkpoint.empty()) {
        j["flow"] = {{"checkpoint", flow_checkpoint}};
    } else {
        j["flow"] = {{"arch",
                      {{"dz", flow_arch.dz},
                       {"blocks", flow_arch.blocks},
                       {"coupling_width", flow_arch.coupling_width},
                       {"encoder_base", flow_arch.encoder_base},
                       {"squeeze_eps", flow_arch.squeeze_eps},
                       {"scale_cap", flow_arch.scale_cap}}},
                     {"train", flow_train.to_json()}};
    }
    j["classifier"] = {{"base", classifier_base}};
    json run_rows = json::array();
    for (const auto& run : runs) {
        json r = run.config.to_json();
        r["label"] = run.label;
        run_rows.push_back(std::move(r));
    }
    j["runs"] = run_rows;
    j["evaluation"] = {{"include_others", include_others},
                       {"superclass_map", superclass_map}};
    j["figures"] = figures;
    return j;
}

std::map<std::string, std::string> load_superclass_map(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("superclass map: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("superclass map: empty file " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "class,superclass")
        throw ConfigError("superclass map: missing column header (expected "
                          "\"class,superclass\", got \"" + line + "\")");
    std::map<std::string, std::string> mapping;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row;
        std::istringstream ss(line);
        std::vector<std::string> fields;
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 2)
            throw ConfigError("superclass map: expected 2 columns at row " +
                              std::to_string(row));
        if (!mapping.emplace(fields[0], fields[1]).second)
            throw ConfigError("superclass map: duplicate class \"" + fields[0] +
                              "\" at row " + std::to_string(row));
    }
    return mapping;
}

}  // namespace flowlab::cli
