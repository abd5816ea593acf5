#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowlab/cli/config.hpp"
#include "flowlab/metrics/discrepancy.hpp"
#include "flowlab/synth/annotations.hpp"

namespace flowlab::cli {

/// A pipeline stage failed after validation passed. Carries the stage name
/// so the tool can report where the run halted; partial artifacts and the
/// manifest entries of completed stages are retained. Mapped to exit code 2.
class StageError : public std::runtime_error {
  public:
    StageError(std::string stage, const std::string& what)
        : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

  private:
    std::string stage_;
};

/// One produced file and the digest of its bytes at production time.
struct ArtifactRecord {
    std::string path;  // relative to the experiment directory
    std::string sha256;
};

/// Ledger entry for one stage: the input-digest key deciding reuse, whether
/// this run reused a previous run's outputs, wall-clock, and every artifact.
struct StageRecord {
    std::string name;
    std::string key;  // digest over resolved inputs (configs + input digests)
    bool skipped = false;
    double seconds = 0;
    std::vector<ArtifactRecord> artifacts;

    nlohmann::json to_json() const;
    static StageRecord from_json(const nlohmann::json& j);
};

/// The experiment ledger written to <out>/manifest.json after every stage.
/// It echoes the resolved config and lists every produced file with digest,
/// so a finished directory is self-describing and replayable.
struct ExperimentManifest {
    std::string tool_version;
    nlohmann::json config_echo;
    std::vector<StageRecord> stages;

    const StageRecord* find(const std::string& name) const;

    nlohmann::json to_json() const;
    static ExperimentManifest from_json(const nlohmann::json& j);
};

using Logger = std::function<void(const std::string&)>;

struct ExperimentResult {
    ExperimentManifest manifest;
    std::vector<metrics::RunSummary> summaries;  // config order
};

/// Runs the full pipeline into cfg.out_dir: dataset (generate or ingest),
/// flow training when any run needs one, then train / predict / evaluate per
/// run, a summary table, and figures. Each stage is keyed by a digest of its
/// resolved inputs; stages whose key and artifacts both match the previous
/// manifest are skipped. Throws ConfigError before any stage runs and
/// StageError from inside a stage.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const Logger& log = {});

/// Filesystem-safe run directory token: lowercases and maps anything outside
/// [a-z0-9_-] to '-'.
std::string sanitize_label(const std::string& label);

/// Class tokens used in prediction and annotation CSVs: the per-class shape
/// names when unique, otherwise "class<i>" (shapes cycle past 8 classes).
std::vector<std::string> class_tokens(const synth::RenderConfig& render);

/// Subgroup annotation rows for one split, indexed 0..n-1 in split order.
synth::AnnotationTable split_annotations(const std::vector<synth::LabeledExample>& split,
                                         const synth::RenderConfig& render);

/// Prediction rows from predicted labels, joined with true labels by index.
std::vector<metrics::PredictionRow> prediction_rows(
    const std::vector<synth::LabeledExample>& split, const std::vector<int>& predicted,
    const std::vector<std::string>& tokens);

}  // namespace flowlab::cli
