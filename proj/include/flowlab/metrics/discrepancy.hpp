#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowlab/metrics/predictions.hpp"
#include "flowlab/synth/annotations.hpp"

namespace flowlab::metrics {

/// A weighted standard deviation was requested where its denominator
/// (sum of weights minus one) is not positive.
class UndefinedVarianceError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A correlation was requested on a constant (zero-variance) input.
class UndefinedCorrelationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Predictions reference example indices missing from (or inconsistent
/// with) the annotation table.
class JoinError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// One populated (class, group) cell: how many test examples landed in it
/// and what fraction were predicted correctly.
struct SubgroupCell {
    long long count = 0;
    double accuracy = 0.0;  // in [0, 1]
};

/// Per-(class, background-group) example counts and accuracies. Only
/// populated cells (count > 0) are stored; empty cells carry no accuracy
/// and never enter downstream metrics. Group indices live in the universe
/// [0, group_count), matching the palette that produced the annotations.
struct SubgroupAccuracyTable {
    int group_count = 0;    // size of the group-index universe
    int others_group = -1;  // index of the catch-all annotation group; -1 = none
    // class label -> group index -> populated cell; both keys ascending.
    std::map<std::string, std::map<int, SubgroupCell>> cells;

    bool empty() const { return cells.empty(); }
    /// Populated cell or nullptr.
    const SubgroupCell* cell(const std::string& class_label, int group) const;
    long long class_count(const std::string& class_label) const;
    /// Count-weighted accuracy over the class's populated cells.
    double class_accuracy(const std::string& class_label) const;
    long long total_count() const;
    /// Count-weighted accuracy over all populated cells.
    double total_accuracy() const;
};

/// Tallies predictions into per-(class, group) cells using the annotations'
/// background groups. Every prediction index must appear in the annotations
/// with a matching class label, else a JoinError lists the offenders.
/// group_count -1 infers the universe from the annotation rows; others_group
/// -1 marks the catch-all group as absent.
SubgroupAccuracyTable subgroup_accuracies(const std::vector<PredictionRow>& predictions,
                                          const synth::AnnotationTable& annotations,
                                          int group_count = -1, int others_group = -1);

/// Weighted standard deviation with raw counts as weights:
///   sigma_w = sqrt( sum_i w_i (s_i - m)^2 / (sum_i w_i - 1) ),
/// where m is the weighted mean of s. Exactly zero when all s_i are equal.
/// Requires matching lengths, strictly positive finite weights, and
/// sum(w) > 1 (else UndefinedVarianceError).
double weighted_std(const std::vector<double>& s, const std::vector<double>& w);

/// Root-mean-square of per-class weighted standard deviations; treats each
/// class equally regardless of size. Requires a nonempty list of
/// nonnegative values.
double macro_std(const std::vector<double>& per_class_sigma);

/// Weighted standard deviation applied once across all populated cells of
/// the table, counts as weights.
double overall_weighted_std(const SubgroupAccuracyTable& table);

/// Lowest-accuracy populated cell of one class; ties break toward the
/// lowest group index.
struct WorstSubgroup {
    int group = -1;
    double accuracy = 0.0;
    double gap = 0.0;  // class accuracy minus worst accuracy
};

/// Per-class worst populated subgroup and its gap to the class accuracy.
std::map<std::string, WorstSubgroup> worst_subgroup(const SubgroupAccuracyTable& table);

enum class CorrelationKind { pearson, spearman };

CorrelationKind correlation_kind_from_name(const std::string& name);
std::string correlation_kind_name(CorrelationKind kind);

/// Sample correlation coefficient in [-1, 1]. Spearman rank-transforms both
/// inputs (average ranks on ties) before the Pearson formula. Requires at
/// least 3 paired finite values and nonzero variance in both inputs (else
/// UndefinedCorrelationError).
double correlation(const std::vector<double>& xs, const std::vector<double>& ys,
                   CorrelationKind kind = CorrelationKind::pearson);

/// Pools classes into superclasses: pooled count = sum of counts, pooled
/// accuracy = count-weighted mean, per group. Classes absent from the
/// grouping keep their own label, so an empty map is the identity.
SubgroupAccuracyTable regroup(const SubgroupAccuracyTable& table,
                              const std::map<std::string, std::string>& grouping);

/// Copy of the table with every cell of the given group removed.
SubgroupAccuracyTable exclude_group(const SubgroupAccuracyTable& table, int group);

/// Per-class slice of a discrepancy report.
struct ClassDiscrepancy {
    std::string class_label;
    long long count = 0;
    double accuracy = 0.0;  // count-weighted over the class's cells
    double sigma_w = 0.0;   // weighted std of the class's cell accuracies
    WorstSubgroup worst;
};

/// Full subgroup-discrepancy summary of one prediction run: per-class
/// weighted stds and worst subgroups, their root-mean-square (macro_std),
/// one weighted std across all cells, and the total accuracy.
struct DiscrepancyReport {
    SubgroupAccuracyTable table;            // the cells the metrics cover
    std::vector<ClassDiscrepancy> classes;  // ascending class label
    double macro_std = 0.0;
    double overall_weighted_std = 0.0;
    double total_accuracy = 0.0;
    long long total_count = 0;
    bool include_others = true;

    nlohmann::json to_json() const;
    /// Flat per-cell CSV with the class and run metrics repeated on each
    /// row for spreadsheet cross-checks. group_names, when given, replace
    /// group indices in the group column.
    std::string to_csv(const std::vector<std::string>& group_names = {}) const;
};

/// Computes the report. include_others=false drops the table's catch-all
/// group cells before any metric is evaluated. Every class must retain at
/// least 2 examples (else UndefinedVarianceError naming the class).
DiscrepancyReport discrepancy_report(const SubgroupAccuracyTable& table,
                                     bool include_others = true);

/// One row of the cross-method comparison: accuracy plus both discrepancy
/// metrics for a single (method, seed) training run.
struct RunSummary {
    std::string method;
    std::uint64_t seed = 0;
    double total_accuracy = 0.0;
    double macro_std = 0.0;
    double weighted_std = 0.0;

    nlohmann::json to_json() const;
};

RunSummary make_run_summary(const std::string& method, std::uint64_t seed,
                            const DiscrepancyReport& report);

/// CSV `method,seed,total_accuracy,macro_std,weighted_std` with fixed
/// decimal places, rows in the given order.
std::string run_summary_csv(const std::vector<RunSummary>& rows, int decimals = 4);

}  // namespace flowlab::metrics
