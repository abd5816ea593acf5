#include "flowlab/cli/figures.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "flowlab/cli/stages.hpp"

namespace flowlab::cli {

namespace fs = std::filesystem;

namespace {

// Every coordinate goes through fixed-precision printing so a given input
// always yields byte-identical SVG.
std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string val(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '&')
            out += "&amp;";
        else if (c == '<')
            out += "&lt;";
        else if (c == '>')
            out += "&gt;";
        else
            out.push_back(c);
    }
    return out;
}

void open_svg(std::ostringstream& svg, double w, double h, const std::string& title) {
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\""
        << num(h) << "\" viewBox=\"0 0 " << num(w) << " " << num(h) << "\">\n";
    svg << "<rect x=\"0\" y=\"0\" width=\"" << num(w) << "\" height=\"" << num(h)
        << "\" fill=\"#ffffff\"/>\n";
    svg << "<text x=\"" << num(w / 2) << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\""
        << " text-anchor=\"middle\" fill=\"#222222\">" << escape(title) << "</text>\n";
}

void text_at(std::ostringstream& svg, double x, double y, const std::string& s, int size,
             const std::string& anchor, const std::string& fill = "#333333") {
    svg << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-family=\"sans-serif\""
        << " font-size=\"" << size << "\" text-anchor=\"" << anchor << "\" fill=\"" << fill
        << "\">" << escape(s) << "</text>\n";
}

void bar(std::ostringstream& svg, double x, double y_base, double height, double width,
         const std::string& fill) {
    svg << "<rect x=\"" << num(x) << "\" y=\"" << num(y_base - height) << "\" width=\""
        << num(width) << "\" height=\"" << num(height) << "\" fill=\"" << fill << "\"/>\n";
}

}  // namespace

std::string subgroup_chart_svg(const FigureReport& fig,
                               const std::vector<std::string>& group_names) {
    const auto& classes = fig.report.classes;
    const double slot = 110.0, bar_w = 36.0, gap = 6.0;
    const double left = 64.0, base_y = 300.0, top_y = 60.0;
    const double w = std::max(480.0, left + classes.size() * slot + 36.0);
    const double h = 368.0;
    const double span = base_y - top_y;  // accuracy 1.0 in pixels

    std::ostringstream svg;
    open_svg(svg, w, h, fig.label + ": class vs worst-subgroup accuracy");

    // y axis with gridlines every 0.25
    for (int t = 0; t <= 4; ++t) {
        const double v = t * 0.25;
        const double y = base_y - v * span;
        svg << "<line x1=\"" << num(left) << "\" y1=\"" << num(y) << "\" x2=\"" << num(w - 20)
            << "\" y2=\"" << num(y) << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
        text_at(svg, left - 8, y + 4, num(v), 11, "end");
    }

    for (std::size_t c = 0; c < classes.size(); ++c) {
        const double x0 = left + 12 + c * slot;
        const double acc = std::clamp(classes[c].accuracy, 0.0, 1.0);
        const double worst = std::clamp(classes[c].worst.accuracy, 0.0, 1.0);
        bar(svg, x0, base_y, acc * span, bar_w, "#2b5d8a");
        bar(svg, x0 + bar_w + gap, base_y, worst * span, bar_w, "#a8c6e0");
        text_at(svg, x0 + bar_w / 2, base_y - acc * span - 4, val(acc), 10, "middle");
        text_at(svg, x0 + bar_w + gap + bar_w / 2, base_y - worst * span - 4, val(worst), 10,
                "middle");
        text_at(svg, x0 + bar_w + gap / 2, base_y + 16, classes[c].class_label, 12, "middle");
        const int g = classes[c].worst.group;
        if (g >= 0 && g < static_cast<int>(group_names.size()))
            text_at(svg, x0 + bar_w + gap / 2, base_y + 30, "worst: " + group_names[g], 10,
                    "middle", "#666666");
    }

    // total-accuracy reference line
    const double total_y = base_y - std::clamp(fig.report.total_accuracy, 0.0, 1.0) * span;
    svg << "<line x1=\"" << num(left) << "\" y1=\"" << num(total_y) << "\" x2=\"" << num(w - 20)
        << "\" y2=\"" << num(total_y)
        << "\" stroke=\"#b03a2e\" stroke-width=\"1.5\" stroke-dasharray=\"6,4\"/>\n";
    text_at(svg, w - 22, total_y - 5, "total " + val(fig.report.total_accuracy), 10, "end",
            "#b03a2e");

    // legend
    svg << "<rect x=\"" << num(left) << "\" y=\"34\" width=\"12\" height=\"12\""
        << " fill=\"#2b5d8a\"/>\n";
    text_at(svg, left + 16, 44, "class accuracy", 11, "start");
    svg << "<rect x=\"" << num(left + 120) << "\" y=\"34\" width=\"12\" height=\"12\""
        << " fill=\"#a8c6e0\"/>\n";
    text_at(svg, left + 136, 44, "worst subgroup", 11, "start");

    svg << "</svg>\n";
    return svg.str();
}

std::string macro_std_chart_svg(const std::vector<FigureReport>& reports) {
    const double slot = 96.0, bar_w = 48.0;
    const double left = 64.0, base_y = 300.0, top_y = 60.0;
    const double w = std::max(420.0, left + reports.size() * slot + 36.0);
    const double h = 368.0;
    const double span = base_y - top_y;

    double vmax = 0.0;
    for (const auto& r : reports) vmax = std::max(vmax, r.report.macro_std);
    const double scale_max = vmax > 0.0 ? vmax * 1.25 : 1.0;

    std::ostringstream svg;
    open_svg(svg, w, h, "MacroStd by method (config order)");

    for (int t = 0; t <= 4; ++t) {
        const double v = scale_max * t / 4.0;
        const double y = base_y - (v / scale_max) * span;
        svg << "<line x1=\"" << num(left) << "\" y1=\"" << num(y) << "\" x2=\"" << num(w - 20)
            << "\" y2=\"" << num(y) << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
        text_at(svg, left - 8, y + 4, val(v), 11, "end");
    }

    for (std::size_t i = 0; i < reports.size(); ++i) {
        const double x0 = left + 24 + i * slot;
        const double v = std::clamp(reports[i].report.macro_std / scale_max, 0.0, 1.0);
        bar(svg, x0, base_y, v * span, bar_w, "#7a4b9d");
        text_at(svg, x0 + bar_w / 2, base_y - v * span - 4, val(reports[i].report.macro_std), 10,
                "middle");
        text_at(svg, x0 + bar_w / 2, base_y + 16, reports[i].label, 10, "middle");
    }

    svg << "</svg>\n";
    return svg.str();
}

std::vector<std::string> emit_figures(const std::vector<FigureReport>& reports,
                                      const std::string& dir,
                                      const std::vector<std::string>& group_names,
                                      const std::function<void(const std::string&)>& log) {
    if (reports.empty()) {
        if (log) log("figures: empty report set, nothing to draw");
        return {};
    }
    fs::create_directories(dir);
    std::vector<std::string> written;
    auto write = [&](const std::string& name, const std::string& body) {
        const fs::path path = fs::path(dir) / name;
        std::ofstream f(path);
        if (!f) throw std::runtime_error("figures: cannot write " + path.string());
        f << body;
        if (!f.good()) throw std::runtime_error("figures: failed writing " + path.string());
        written.push_back(path.string());
    };
    for (const auto& r : reports)
        write("subgroup_" + sanitize_label(r.label) + ".svg",
              subgroup_chart_svg(r, group_names));
    write("macro_std.svg", macro_std_chart_svg(reports));
    if (log) log("figures: wrote " + std::to_string(written.size()) + " file(s) under " + dir);
    return written;
}

}  // namespace flowlab::cli
