#include "flowlab/metrics/predictions.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace flowlab::metrics {

namespace {

[[noreturn]] void row_error(std::size_t row, const std::string& what) {
    throw std::runtime_error("predictions: " + what + " at row " + std::to_string(row));
}

}  // namespace

std::vector<PredictionRow> load_predictions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("predictions: cannot open " + path);

    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("predictions: empty file " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "index,true_class,pred_class")
        throw std::runtime_error("predictions: missing column header (expected "
                                 "\"index,true_class,pred_class\", got \"" + line + "\")");

    std::vector<PredictionRow> rows;
    std::set<std::size_t> seen;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row;

        std::istringstream ss(line);
        std::vector<std::string> fields;
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() < 3) row_error(row, "missing column");
        if (fields.size() > 3) row_error(row, "too many columns");

        std::size_t index;
        try {
            std::size_t pos = 0;
            index = std::stoull(fields[0], &pos);
            if (pos != fields[0].size()) throw std::invalid_argument(fields[0]);
        } catch (const std::exception&) {
            row_error(row, "non-integer index \"" + fields[0] + "\"");
        }
        if (!seen.insert(index).second)
            row_error(row, "duplicate index " + std::to_string(index));

        rows.push_back(PredictionRow{index, fields[1], fields[2]});
    }
    return rows;
}

void save_predictions(const std::vector<PredictionRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("predictions: cannot write " + path);
    out << "index,true_class,pred_class\n";
    for (const auto& r : rows) {
        out << r.index << "," << r.true_class << "," << r.pred_class << "\n";
    }
    if (!out) throw std::runtime_error("predictions: write failed for " + path);
}

}  // namespace flowlab::metrics
