#include "flowlab/metrics/discrepancy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>
#include <utility>

namespace flowlab::metrics {

namespace {

std::string fmt_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string group_label(int g, const std::vector<std::string>& names) {
    if (g >= 0 && static_cast<std::size_t>(g) < names.size()) return names[g];
    return std::to_string(g);
}

/// 1-based ranks; runs of equal values share their average rank.
std::vector<double> average_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double dx = xs[i] - mx;
        double dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0)
        throw UndefinedCorrelationError("correlation: zero variance in x input");
    if (syy == 0.0)
        throw UndefinedCorrelationError("correlation: zero variance in y input");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

bool all_equal(const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] != v[0]) return false;
    return true;
}

}  // namespace

const SubgroupCell* SubgroupAccuracyTable::cell(const std::string& class_label, int group) const {
    auto it = cells.find(class_label);
    if (it == cells.end()) return nullptr;
    auto jt = it->second.find(group);
    return jt == it->second.end() ? nullptr : &jt->second;
}

long long SubgroupAccuracyTable::class_count(const std::string& class_label) const {
    auto it = cells.find(class_label);
    if (it == cells.end())
        throw std::invalid_argument("subgroup table: unknown class \"" + class_label + "\"");
    long long n = 0;
    for (const auto& [g, cell] : it->second) n += cell.count;
    return n;
}

double SubgroupAccuracyTable::class_accuracy(const std::string& class_label) const {
    auto it = cells.find(class_label);
    if (it == cells.end())
        throw std::invalid_argument("subgroup table: unknown class \"" + class_label + "\"");
    long long n = 0;
    double correct = 0.0;
    for (const auto& [g, cell] : it->second) {
        n += cell.count;
        correct += static_cast<double>(cell.count) * cell.accuracy;
    }
    if (n <= 0)
        throw std::invalid_argument("subgroup table: class \"" + class_label + "\" has no examples");
    return correct / static_cast<double>(n);
}

long long SubgroupAccuracyTable::total_count() const {
    long long n = 0;
    for (const auto& [cls, groups] : cells)
        for (const auto& [g, cell] : groups) n += cell.count;
    return n;
}

double SubgroupAccuracyTable::total_accuracy() const {
    long long n = 0;
    double correct = 0.0;
    for (const auto& [cls, groups] : cells)
        for (const auto& [g, cell] : groups) {
            n += cell.count;
            correct += static_cast<double>(cell.count) * cell.accuracy;
        }
    if (n <= 0) throw std::invalid_argument("subgroup table: no examples");
    return correct / static_cast<double>(n);
}

SubgroupAccuracyTable subgroup_accuracies(const std::vector<PredictionRow>& predictions,
                                          const synth::AnnotationTable& annotations,
                                          int group_count, int others_group) {
    int inferred = 0;
    for (const auto& [idx, row] : annotations.rows) {
        if (row.bg_group < 0)
            throw std::invalid_argument("subgroup accuracies: negative group index " +
                                        std::to_string(row.bg_group) + " at example " +
                                        std::to_string(idx));
        inferred = std::max(inferred, row.bg_group + 1);
    }
    if (group_count < 0) group_count = inferred;
    if (inferred > group_count)
        throw std::invalid_argument("subgroup accuracies: annotation group index " +
                                    std::to_string(inferred - 1) + " outside universe of " +
                                    std::to_string(group_count));
    if (others_group >= group_count)
        throw std::invalid_argument("subgroup accuracies: others_group " +
                                    std::to_string(others_group) + " outside universe of " +
                                    std::to_string(group_count));

    std::set<std::size_t> seen;
    std::vector<std::size_t> missing;
    for (const auto& p : predictions) {
        if (!seen.insert(p.index).second)
            throw std::invalid_argument("subgroup accuracies: duplicate prediction index " +
                                        std::to_string(p.index));
        if (annotations.rows.find(p.index) == annotations.rows.end())
            missing.push_back(p.index);
    }
    if (!missing.empty()) {
        std::sort(missing.begin(), missing.end());
        std::ostringstream msg;
        msg << "subgroup accuracies: " << missing.size()
            << " prediction index(es) missing from annotations:";
        const std::size_t shown = std::min<std::size_t>(missing.size(), 32);
        for (std::size_t i = 0; i < shown; ++i) msg << (i ? ", " : " ") << missing[i];
        if (missing.size() > shown) msg << " (+" << missing.size() - shown << " more)";
        throw JoinError(msg.str());
    }

    std::map<std::string, std::map<int, std::pair<long long, long long>>> tally;  // total, correct
    for (const auto& p : predictions) {
        const auto& row = annotations.rows.at(p.index);
        if (row.class_label != p.true_class)
            throw JoinError("subgroup accuracies: class mismatch at index " +
                            std::to_string(p.index) + " (predictions \"" + p.true_class +
                            "\", annotations \"" + row.class_label + "\")");
        auto& counts = tally[p.true_class][row.bg_group];
        ++counts.first;
        if (p.correct()) ++counts.second;
    }

    SubgroupAccuracyTable table;
    table.group_count = group_count;
    table.others_group = others_group;
    for (const auto& [cls, groups] : tally)
        for (const auto& [g, counts] : groups)
            table.cells[cls][g] = SubgroupCell{
                counts.first,
                static_cast<double>(counts.second) / static_cast<double>(counts.first)};
    return table;
}

double weighted_std(const std::vector<double>& s, const std::vector<double>& w) {
    if (s.size() != w.size())
        throw std::invalid_argument("weighted_std: input lengths differ (" +
                                    std::to_string(s.size()) + " vs " +
                                    std::to_string(w.size()) + ")");
    double wsum = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!std::isfinite(s[i]))
            throw std::invalid_argument("weighted_std: non-finite value");
        if (!std::isfinite(w[i]) || w[i] <= 0.0)
            throw std::invalid_argument("weighted_std: weights must be positive and finite");
        wsum += w[i];
    }
    if (wsum <= 1.0)
        throw UndefinedVarianceError("weighted_std: sum of weights must exceed 1 (got " +
                                     fmt_double(wsum) + ")");
    // The weighted mean of identical values is exactly that value; returning
    // 0 here keeps "zero deviation iff all equal" free of roundoff noise.
    if (all_equal(s)) return 0.0;

    double mean = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) mean += w[i] * s[i];
    mean /= wsum;
    double num = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        double d = s[i] - mean;
        num += w[i] * d * d;
    }
    return std::sqrt(num / (wsum - 1.0));
}

double macro_std(const std::vector<double>& per_class_sigma) {
    if (per_class_sigma.empty())
        throw std::invalid_argument("macro_std: at least one class required");
    double sq = 0.0;
    for (double v : per_class_sigma) {
        if (!std::isfinite(v) || v < 0.0)
            throw std::invalid_argument("macro_std: values must be nonnegative and finite");
        sq += v * v;
    }
    return std::sqrt(sq / static_cast<double>(per_class_sigma.size()));
}

double overall_weighted_std(const SubgroupAccuracyTable& table) {
    std::vector<double> s, w;
    for (const auto& [cls, groups] : table.cells)
        for (const auto& [g, cell] : groups) {
            s.push_back(cell.accuracy);
            w.push_back(static_cast<double>(cell.count));
        }
    if (s.empty())
        throw std::invalid_argument("overall_weighted_std: table has no populated cells");
    return weighted_std(s, w);
}

std::map<std::string, WorstSubgroup> worst_subgroup(const SubgroupAccuracyTable& table) {
    std::map<std::string, WorstSubgroup> out;
    for (const auto& [cls, groups] : table.cells) {
        if (groups.empty()) continue;
        WorstSubgroup ws;
        bool first = true;
        for (const auto& [g, cell] : groups) {
            // Strict < keeps the lowest group index on accuracy ties.
            if (first || cell.accuracy < ws.accuracy) {
                ws.group = g;
                ws.accuracy = cell.accuracy;
                first = false;
            }
        }
        ws.gap = table.class_accuracy(cls) - ws.accuracy;
        out.emplace(cls, ws);
    }
    return out;
}

CorrelationKind correlation_kind_from_name(const std::string& name) {
    if (name == "pearson") return CorrelationKind::pearson;
    if (name == "spearman") return CorrelationKind::spearman;
    throw std::invalid_argument("correlation: unknown kind \"" + name +
                                "\" (expected pearson or spearman)");
}

std::string correlation_kind_name(CorrelationKind kind) {
    return kind == CorrelationKind::pearson ? "pearson" : "spearman";
}

double correlation(const std::vector<double>& xs, const std::vector<double>& ys,
                   CorrelationKind kind) {
    if (xs.size() != ys.size())
        throw std::invalid_argument("correlation: input lengths differ (" +
                                    std::to_string(xs.size()) + " vs " +
                                    std::to_string(ys.size()) + ")");
    if (xs.size() < 3)
        throw std::invalid_argument("correlation: need at least 3 paired values (got " +
                                    std::to_string(xs.size()) + ")");
    for (std::size_t i = 0; i < xs.size(); ++i)
        if (!std::isfinite(xs[i]) || !std::isfinite(ys[i]))
            throw std::invalid_argument("correlation: non-finite value");
    // Constant inputs can leave a tiny nonzero variance after rounding, so
    // detect them directly instead of relying on the sums below.
    if (all_equal(xs))
        throw UndefinedCorrelationError("correlation: zero variance in x input");
    if (all_equal(ys))
        throw UndefinedCorrelationError("correlation: zero variance in y input");

    if (kind == CorrelationKind::spearman)
        return pearson(average_ranks(xs), average_ranks(ys));
    return pearson(xs, ys);
}

SubgroupAccuracyTable regroup(const SubgroupAccuracyTable& table,
                              const std::map<std::string, std::string>& grouping) {
    SubgroupAccuracyTable out;
    out.group_count = table.group_count;
    out.others_group = table.others_group;
    std::map<std::string, std::map<int, std::vector<SubgroupCell>>> pooled;
    for (const auto& [cls, groups] : table.cells) {
        auto it = grouping.find(cls);
        const std::string& super = it == grouping.end() ? cls : it->second;
        for (const auto& [g, cell] : groups) pooled[super][g].push_back(cell);
    }
    for (const auto& [cls, groups] : pooled)
        for (const auto& [g, sources] : groups) {
            // A lone source is copied verbatim so identity regrouping is exact.
            if (sources.size() == 1) {
                out.cells[cls][g] = sources.front();
                continue;
            }
            long long n = 0;
            double correct = 0.0;
            for (const auto& c : sources) {
                n += c.count;
                correct += static_cast<double>(c.count) * c.accuracy;
            }
            out.cells[cls][g] = SubgroupCell{n, correct / static_cast<double>(n)};
        }
    return out;
}

SubgroupAccuracyTable exclude_group(const SubgroupAccuracyTable& table, int group) {
    SubgroupAccuracyTable out;
    out.group_count = table.group_count;
    out.others_group = table.others_group;
    for (const auto& [cls, groups] : table.cells)
        for (const auto& [g, cell] : groups)
            if (g != group) out.cells[cls][g] = cell;
    return out;
}

DiscrepancyReport discrepancy_report(const SubgroupAccuracyTable& table, bool include_others) {
    DiscrepancyReport rep;
    rep.include_others = include_others;
    rep.table = (!include_others && table.others_group >= 0)
                    ? exclude_group(table, table.others_group)
                    : table;
    if (rep.table.empty())
        throw std::invalid_argument("discrepancy report: no populated cells");

    auto worst = worst_subgroup(rep.table);
    std::vector<double> sigmas;
    for (const auto& [label, groups] : rep.table.cells) {
        ClassDiscrepancy cd;
        cd.class_label = label;
        cd.count = rep.table.class_count(label);
        if (cd.count <= 1)
            throw UndefinedVarianceError("discrepancy report: class \"" + label + "\" has " +
                                         std::to_string(cd.count) +
                                         " example(s); weighted std undefined");
        cd.accuracy = rep.table.class_accuracy(label);
        std::vector<double> s, w;
        for (const auto& [g, cell] : groups) {
            s.push_back(cell.accuracy);
            w.push_back(static_cast<double>(cell.count));
        }
        cd.sigma_w = weighted_std(s, w);
        cd.worst = worst.at(label);
        sigmas.push_back(cd.sigma_w);
        rep.classes.push_back(std::move(cd));
    }
    rep.macro_std = metrics::macro_std(sigmas);
    rep.overall_weighted_std = metrics::overall_weighted_std(rep.table);
    rep.total_count = rep.table.total_count();
    rep.total_accuracy = rep.table.total_accuracy();
    return rep;
}

nlohmann::json DiscrepancyReport::to_json() const {
    nlohmann::json per_sigma = nlohmann::json::object();
    nlohmann::json per_acc = nlohmann::json::object();
    nlohmann::json per_count = nlohmann::json::object();
    nlohmann::json worst = nlohmann::json::object();
    for (const auto& c : classes) {
        per_sigma[c.class_label] = c.sigma_w;
        per_acc[c.class_label] = c.accuracy;
        per_count[c.class_label] = c.count;
        worst[c.class_label] = {{"group", c.worst.group},
                                {"accuracy", c.worst.accuracy},
                                {"gap", c.worst.gap}};
    }
    nlohmann::json cell_rows = nlohmann::json::array();
    for (const auto& [cls, groups] : table.cells)
        for (const auto& [g, cell] : groups)
            cell_rows.push_back({{"class", cls},
                                 {"group", g},
                                 {"count", cell.count},
                                 {"accuracy", cell.accuracy}});
    return {{"total_accuracy", total_accuracy},
            {"total_count", total_count},
            {"macro_std", macro_std},
            {"overall_weighted_std", overall_weighted_std},
            {"per_class_sigma_w", per_sigma},
            {"per_class_accuracy", per_acc},
            {"per_class_count", per_count},
            {"worst_subgroup", worst},
            {"include_others", include_others},
            {"group_count", table.group_count},
            {"others_group", table.others_group},
            {"cells", cell_rows}};
}

std::string DiscrepancyReport::to_csv(const std::vector<std::string>& group_names) const {
    std::ostringstream out;
    out << "class,group,count,accuracy,class_accuracy,class_sigma_w,class_worst_group,"
           "class_worst_accuracy,class_worst_gap,total_accuracy,macro_std,"
           "overall_weighted_std\n";
    for (const auto& c : classes) {
        for (const auto& [g, cell] : table.cells.at(c.class_label)) {
            out << c.class_label << ',' << group_label(g, group_names) << ',' << cell.count
                << ',' << fmt_double(cell.accuracy) << ',' << fmt_double(c.accuracy) << ','
                << fmt_double(c.sigma_w) << ',' << group_label(c.worst.group, group_names)
                << ',' << fmt_double(c.worst.accuracy) << ',' << fmt_double(c.worst.gap) << ','
                << fmt_double(total_accuracy) << ',' << fmt_double(macro_std) << ','
                << fmt_double(overall_weighted_std) << '\n';
        }
    }
    return out.str();
}

RunSummary make_run_summary(const std::string& method, std::uint64_t seed,
                            const DiscrepancyReport& report) {
    RunSummary row;
    row.method = method;
    row.seed = seed;
    row.total_accuracy = report.total_accuracy;
    row.macro_std = report.macro_std;
    row.weighted_std = report.overall_weighted_std;
    return row;
}

nlohmann::json RunSummary::to_json() const {
    return {{"method", method},
            {"seed", seed},
            {"total_accuracy", total_accuracy},
            {"macro_std", macro_std},
            {"weighted_std", weighted_std}};
}

std::string run_summary_csv(const std::vector<RunSummary>& rows, int decimals) {
    if (decimals < 0 || decimals > 17)
        throw std::invalid_argument("run summary: decimals out of range");
    std::ostringstream out;
    out << "method,seed,total_accuracy,macro_std,weighted_std\n";
    char buf[64];
    for (const auto& r : rows) {
        out << r.method << ',' << r.seed;
        for (double v : {r.total_accuracy, r.macro_std, r.weighted_std}) {
            std::snprintf(buf, sizeof buf, ",%.*f", decimals, v);
            out << buf;
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace flowlab::metrics
