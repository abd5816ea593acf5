#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace flowlab::metrics {

/// One scored test example: the row format emitted by `predict` and
/// consumed by the discrepancy metrics. Class tokens are free-form strings
/// and must match the annotation file's class labels.
struct PredictionRow {
    std::size_t index = 0;   // example index, joins against annotations
    std::string true_class;  // ground-truth class token
    std::string pred_class;  // classifier output token

    bool correct() const { return true_class == pred_class; }
};

/// Parses `index,true_class,pred_class` CSV. Duplicate indices, missing
/// columns, and non-integer indices raise errors naming the 1-based data
/// row. Rows are returned in file order.
std::vector<PredictionRow> load_predictions(const std::string& path);

/// Writes rows in the given order under the canonical header.
void save_predictions(const std::vector<PredictionRow>& rows, const std::string& path);

}  // namespace flowlab::metrics
