#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowlab/flow/train.hpp"
#include "flowlab/synth/dataset.hpp"
#include "flowlab/trainer/train.hpp"

namespace flowlab::cli {

/// A config file or flag combination failed validation before any stage ran.
/// Mapped to exit code 1 by the command-line tool.
class ConfigError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// One expanded classifier training job. Configs listing several seeds are
/// unrolled into one plan per seed; the label names the row in summaries
/// (defaults to the method name).
struct RunPlan {
    std::string label;
    trainer::TrainConfig config;
};

/// Everything a full experiment needs: where the data comes from, how the
/// flow is obtained, the classifier jobs to run, and evaluation options.
struct ExperimentConfig {
    std::string out_dir;

    // Dataset: an existing directory, or a generation spec.
    std::string dataset_path;  // empty = generate from `dataset`
    synth::DatasetSpec dataset = synth::DatasetSpec::defaults(4);

    // Flow: an existing checkpoint, or an architecture + training recipe.
    // Image size is taken from the dataset, never from the config.
    std::string flow_checkpoint;  // empty = train when any run needs a flow
    flow::FlowArch flow_arch;
    flow::FlowTrainConfig flow_train;

    int classifier_base = 32;  // width of the classifier's first conv stage
    std::vector<RunPlan> runs;

    bool include_others = true;   // keep catch-all background cells in metrics
    std::string superclass_map;   // optional class -> superclass CSV
    bool figures = true;

    /// Any run whose method consumes flow transforms?
    bool needs_flow() const;

    /// Structural checks plus referenced-path existence. Throws ConfigError.
    void validate() const;

    /// Resolved echo: defaults filled in, runs expanded one entry per seed.
    nlohmann::json to_json() const;
};

/// Dataset generation spec from config JSON. Accepts num_classes, n_train,
/// n_test, rho, seed, height, width, and palette_colors (how many of the
/// default background color groups to use).
synth::DatasetSpec dataset_spec_from_json(const nlohmann::json& j);
nlohmann::json dataset_spec_to_json(const synth::DatasetSpec& spec);

flow::FlowArch flow_arch_from_json(const nlohmann::json& j);
flow::FlowTrainConfig flow_train_config_from_json(const nlohmann::json& j);

/// Parses the experiment schema. Unknown keys anywhere raise ConfigError so
/// typos cannot silently fall back to defaults. Each runs[] entry must name
/// its seed(s) explicitly.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);

/// `class,superclass` CSV for pooling classes before evaluation.
std::map<std::string, std::string> load_superclass_map(const std::string& path);

}  // namespace flowlab::cli
