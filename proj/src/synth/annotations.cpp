#include "flowlab/synth/annotations.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace flowlab::synth {

namespace {

[[noreturn]] void row_error(std::size_t row, const std::string& what) {
    throw std::runtime_error("annotations: " + what + " at row " + std::to_string(row));
}

}  // namespace

AnnotationTable load_annotations(const std::string& path, const Palette& palette,
                                 const GroupAliases& aliases) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("annotations: cannot open " + path);

    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("annotations: empty file " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "index,class_label,bg_group")
        throw std::runtime_error("annotations: missing column header (expected "
                                 "\"index,class_label,bg_group\", got \"" + line + "\")");

    AnnotationTable table;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row;

        std::istringstream ss(line);
        std::string idx_s, cls, grp;
        bool have_idx = static_cast<bool>(std::getline(ss, idx_s, ','));
        bool have_cls = static_cast<bool>(std::getline(ss, cls, ','));
        bool have_grp = static_cast<bool>(std::getline(ss, grp));
        if (!have_idx || !have_cls || !have_grp) row_error(row, "missing column");
        std::string extra;
        if (std::getline(ss, extra, ',')) row_error(row, "too many columns");

        std::size_t index;
        try {
            std::size_t pos = 0;
            index = std::stoull(idx_s, &pos);
            if (pos != idx_s.size()) throw std::invalid_argument(idx_s);
        } catch (const std::exception&) {
            row_error(row, "non-integer index \"" + idx_s + "\"");
        }

        auto resolved = palette.find(grp);
        if (!resolved) {
            auto alias = aliases.find(grp);
            if (alias != aliases.end()) resolved = palette.find(alias->second);
        }
        if (!resolved) row_error(row, "unknown group \"" + grp + "\"");

        auto [it, inserted] = table.rows.emplace(
            index, AnnotationTable::Row{cls, *resolved});
        if (!inserted) row_error(row, "duplicate index " + std::to_string(index));
    }
    return table;
}

void save_annotations(const AnnotationTable& table, const Palette& palette,
                      const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("annotations: cannot write " + path);
    out << "index,class_label,bg_group\n";
    for (const auto& [index, entry] : table.rows) {
        out << index << "," << entry.class_label << "," << palette.name(entry.bg_group) << "\n";
    }
    if (!out) throw std::runtime_error("annotations: write failed for " + path);
}

}  // namespace flowlab::synth
