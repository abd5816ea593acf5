#pragma once

#include <map>
#include <string>

#include "flowlab/synth/palette.hpp"

namespace flowlab::synth {

/// Per-example subgroup annotations joining predictions to background
/// groups: example index -> (class token, group index). Group indices refer
/// to a Palette, including its trailing "others" category.
struct AnnotationTable {
    struct Row {
        std::string class_label;  // free-form token ("cat", "3", ...)
        int bg_group = 0;
    };
    std::map<std::size_t, Row> rows;  // keyed by example index

    std::size_t size() const { return rows.size(); }
};

/// Maps non-canonical color names (e.g. "navy") onto palette group names.
using GroupAliases = std::map<std::string, std::string>;

/// Parses `index,class_label,bg_group` CSV. Group names must match the
/// palette (or "others"), directly or through an alias. Duplicate indices,
/// missing columns, and unknown groups raise errors naming the 1-based data
/// row.
AnnotationTable load_annotations(const std::string& path, const Palette& palette,
                                 const GroupAliases& aliases = {});

/// Writes the table in index order using canonical palette group names.
void save_annotations(const AnnotationTable& table, const Palette& palette,
                      const std::string& path);

}  // namespace flowlab::synth
