#pragma once

#include <functional>
#include <string>
#include <vector>

#include "flowlab/metrics/discrepancy.hpp"

namespace flowlab::cli {

/// One evaluated run, named for figure titles and file names.
struct FigureReport {
    std::string label;
    metrics::DiscrepancyReport report;
};

/// Grouped bar chart for one run: per class a dark bar (class accuracy) and
/// a light bar (worst-subgroup accuracy), plus a dashed reference line at
/// the total accuracy. Byte-deterministic for fixed input: every coordinate
/// is printed with fixed precision. Optional group names label the light
/// bars with the worst group.
std::string subgroup_chart_svg(const FigureReport& fig,
                               const std::vector<std::string>& group_names = {});

/// Comparison chart: one MacroStd bar per report, in input (config) order.
std::string macro_std_chart_svg(const std::vector<FigureReport>& reports);

/// Writes subgroup_<label>.svg per report plus macro_std.svg under dir and
/// returns the written paths. An empty report set warns and writes nothing.
std::vector<std::string> emit_figures(const std::vector<FigureReport>& reports,
                                      const std::string& dir,
                                      const std::vector<std::string>& group_names = {},
                                      const std::function<void(const std::string&)>& log = {});

}  // namespace flowlab::cli
