#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "flowlab/core/rng.hpp"
#include "flowlab/metrics/discrepancy.hpp"
#include "flowlab/metrics/predictions.hpp"

using namespace flowlab;
using metrics::CorrelationKind;
using metrics::DiscrepancyReport;
using metrics::JoinError;
using metrics::PredictionRow;
using metrics::SubgroupAccuracyTable;
using metrics::SubgroupCell;
using metrics::UndefinedCorrelationError;
using metrics::UndefinedVarianceError;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        static int counter = 0;
        path = std::filesystem::temp_directory_path() /
               ("flowlab_metrics_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

/// Straightforward high-precision evaluation of the weighted standard
/// deviation, independent of the library's shortcuts.
long double oracle_weighted_std(const std::vector<double>& s, const std::vector<double>& w) {
    long double wsum = 0.0L, mean = 0.0L;
    for (std::size_t i = 0; i < s.size(); ++i) {
        wsum += w[i];
        mean += static_cast<long double>(w[i]) * s[i];
    }
    mean /= wsum;
    long double num = 0.0L;
    for (std::size_t i = 0; i < s.size(); ++i) {
        long double d = s[i] - mean;
        num += w[i] * d * d;
    }
    return sqrtl(num / (wsum - 1.0L));
}

/// Bessel-corrected sample standard deviation in long double.
long double oracle_sample_std(const std::vector<double>& s) {
    long double mean = 0.0L;
    for (double v : s) mean += v;
    mean /= static_cast<long double>(s.size());
    long double num = 0.0L;
    for (double v : s) {
        long double d = v - mean;
        num += d * d;
    }
    return sqrtl(num / (static_cast<long double>(s.size()) - 1.0L));
}

/// Direct covariance-over-sigmas evaluation in long double.
long double oracle_pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    long double mx = 0.0L, my = 0.0L;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<long double>(xs.size());
    my /= static_cast<long double>(xs.size());
    long double sxy = 0.0L, sxx = 0.0L, syy = 0.0L;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        long double dx = xs[i] - mx;
        long double dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    return sxy / sqrtl(sxx * syy);
}

synth::AnnotationTable make_annotations(
    const std::vector<std::tuple<std::size_t, std::string, int>>& rows) {
    synth::AnnotationTable table;
    for (const auto& [idx, cls, grp] : rows)
        table.rows[idx] = synth::AnnotationTable::Row{cls, grp};
    return table;
}

PredictionRow pred(std::size_t idx, const std::string& truth, const std::string& guess) {
    return PredictionRow{idx, truth, guess};
}

bool cells_equal(const SubgroupAccuracyTable& a, const SubgroupAccuracyTable& b) {
    if (a.group_count != b.group_count || a.others_group != b.others_group) return false;
    if (a.cells.size() != b.cells.size()) return false;
    for (const auto& [cls, groups] : a.cells) {
        auto it = b.cells.find(cls);
        if (it == b.cells.end() || it->second.size() != groups.size()) return false;
        for (const auto& [g, cell] : groups) {
            auto jt = it->second.find(g);
            if (jt == it->second.end()) return false;
            if (jt->second.count != cell.count || jt->second.accuracy != cell.accuracy)
                return false;
        }
    }
    return true;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string cur;
    for (char c : text) {
        if (c == '\n') {
            lines.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) lines.push_back(cur);
    return lines;
}

}  // namespace

TEST_CASE("weighted std matches hand-evaluated cases") {
    // s = (0.9, 0.5), w = (3, 1): weighted mean 0.8, numerator
    // 3*0.01 + 1*0.09 = 0.12, denominator 3 -> sqrt(0.04) = 0.2.
    CHECK(metrics::weighted_std({0.9, 0.5}, {3.0, 1.0}) ==
          doctest::Approx(0.2).epsilon(1e-12));

    // s = (1.0, 0.5, 0.0), w = (2, 2, 2): mean 0.5, numerator
    // 2*0.25 + 0 + 2*0.25 = 1, denominator 5 -> sqrt(0.2).
    CHECK(metrics::weighted_std({1.0, 0.5, 0.0}, {2.0, 2.0, 2.0}) ==
          doctest::Approx(std::sqrt(0.2)).epsilon(1e-12));
}

TEST_CASE("weighted std is zero exactly when all accuracies are equal") {
    CHECK(metrics::weighted_std({0.3, 0.3, 0.3}, {2.0, 5.0, 9.0}) == 0.0);
    CHECK(metrics::weighted_std({0.1, 0.1}, {1.0, 1.0}) == 0.0);

    Rng rng(41);
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t n = 1 + rng.below(8);
        double value = rng.uniform();
        std::vector<double> s(n, value), w;
        for (std::size_t i = 0; i < n; ++i) w.push_back(1.0 + rng.uniform() * 10.0);
        w[0] += 2.0;  // keep the weight sum above 1 even for n = 1
        CHECK(metrics::weighted_std(s, w) == 0.0);
    }
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t n = 2 + rng.below(8);
        std::vector<double> s, w;
        for (std::size_t i = 0; i < n; ++i) {
            s.push_back(rng.uniform());
            w.push_back(1.0 + rng.uniform() * 10.0);
        }
        s[0] += 0.5;  // force at least one distinct value
        CHECK(metrics::weighted_std(s, w) > 0.0);
    }
}

TEST_CASE("weighted std agrees with a high-precision oracle on random inputs") {
    Rng rng(42);
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t n = 2 + rng.below(9);
        std::vector<double> s, w;
        for (std::size_t i = 0; i < n; ++i) {
            s.push_back(rng.uniform());
            w.push_back(0.2 + rng.uniform() * 20.0);
        }
        w[0] += 1.0;  // weight sum safely above 1
        double got = metrics::weighted_std(s, w);
        long double want = oracle_weighted_std(s, w);
        CHECK(got == doctest::Approx(static_cast<double>(want)).epsilon(1e-12));
    }
}

TEST_CASE("weighted std with unit weights reduces to the sample standard deviation") {
    Rng rng(43);
    for (int trial = 0; trial < 100; ++trial) {
        std::size_t n = 2 + rng.below(12);
        std::vector<double> s;
        for (std::size_t i = 0; i < n; ++i) s.push_back(rng.uniform());
        std::vector<double> w(n, 1.0);
        double got = metrics::weighted_std(s, w);
        long double want = oracle_sample_std(s);
        CHECK(got == doctest::Approx(static_cast<double>(want)).epsilon(1e-12));
    }
}

TEST_CASE("weighted std rejects undefined variances and bad arguments") {
    CHECK_THROWS_AS(metrics::weighted_std({}, {}), UndefinedVarianceError);
    CHECK_THROWS_AS(metrics::weighted_std({0.5}, {1.0}), UndefinedVarianceError);
    CHECK_THROWS_AS(metrics::weighted_std({0.5, 0.7}, {0.4, 0.6}), UndefinedVarianceError);
    CHECK_THROWS_WITH_AS(metrics::weighted_std({0.5}, {0.25}),
                         "weighted_std: sum of weights must exceed 1 (got 0.25)",
                         UndefinedVarianceError);

    CHECK_THROWS_AS(metrics::weighted_std({0.5, 0.7}, {2.0}), std::invalid_argument);
    CHECK_THROWS_AS(metrics::weighted_std({0.5, 0.7}, {2.0, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(metrics::weighted_std({0.5, 0.7}, {2.0, -1.0}), std::invalid_argument);
    CHECK_THROWS_AS(metrics::weighted_std({0.5, std::nan("")}, {2.0, 2.0}),
                    std::invalid_argument);

    // The dedicated error stays catchable through the standard hierarchy.
    CHECK_THROWS_AS(metrics::weighted_std({0.5}, {1.0}), std::runtime_error);
}

TEST_CASE("weighted std is invariant to permuting the pairs") {
    Rng rng(44);
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t n = 2 + rng.below(10);
        std::vector<double> s, w;
        for (std::size_t i = 0; i < n; ++i) {
            s.push_back(rng.uniform());
            w.push_back(0.5 + rng.uniform() * 8.0);
        }
        w[0] += 1.0;
        double base = metrics::weighted_std(s, w);

        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        for (std::size_t i = n; i > 1; --i)
            std::swap(order[i - 1], order[rng.below(i)]);
        std::vector<double> s2, w2;
        for (std::size_t i : order) {
            s2.push_back(s[i]);
            w2.push_back(w[i]);
        }
        CHECK(metrics::weighted_std(s2, w2) == doctest::Approx(base).epsilon(1e-12));
    }
}

TEST_CASE("macro std is the root-mean-square of per-class deviations") {
    CHECK(metrics::macro_std({0.2, 0.0}) ==
          doctest::Approx(0.1414213562373095).epsilon(1e-12));
    CHECK(metrics::macro_std({0.0, 0.0, 0.0}) == 0.0);
    CHECK(metrics::macro_std({0.3}) == doctest::Approx(0.3).epsilon(1e-12));

    CHECK_THROWS_AS(metrics::macro_std({}), std::invalid_argument);
    CHECK_THROWS_AS(metrics::macro_std({0.1, -0.2}), std::invalid_argument);
    CHECK_THROWS_AS(metrics::macro_std({std::nan("")}), std::invalid_argument);

    Rng rng(45);
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t n = 1 + rng.below(8);
        std::vector<double> sig;
        for (std::size_t i = 0; i < n; ++i) sig.push_back(rng.uniform() * 0.5);
        double m = metrics::macro_std(sig);

        double lo = *std::min_element(sig.begin(), sig.end());
        double hi = *std::max_element(sig.begin(), sig.end());
        CHECK(m >= lo - 1e-15);
        CHECK(m <= hi + 1e-15);

        double k = 0.25 + rng.uniform() * 4.0;
        std::vector<double> scaled;
        for (double v : sig) scaled.push_back(k * v);
        CHECK(metrics::macro_std(scaled) == doctest::Approx(k * m).epsilon(1e-12));
    }
}

TEST_CASE("subgroup accuracies tallies counts and correct fractions per cell") {
    auto annos = make_annotations({{0, "cat", 1}, {1, "cat", 1}, {2, "dog", 0}, {3, "dog", 2}});

    SUBCASE("mixed outcomes within one cell") {
        std::vector<PredictionRow> preds = {pred(0, "cat", "cat"), pred(1, "cat", "dog")};
        auto table = metrics::subgroup_accuracies(preds, annos);
        REQUIRE(table.cell("cat", 1) != nullptr);
        CHECK(table.cell("cat", 1)->count == 2);
        CHECK(table.cell("cat", 1)->accuracy == 0.5);
        CHECK(table.cells.size() == 1);
        CHECK(table.cell("cat", 0) == nullptr);  // empty cells are not materialized
        CHECK(table.cell("dog", 0) == nullptr);
    }

    SUBCASE("all-correct predictions give unit accuracy everywhere") {
        std::vector<PredictionRow> preds = {pred(0, "cat", "cat"), pred(1, "cat", "cat"),
                                            pred(2, "dog", "dog"), pred(3, "dog", "dog")};
        auto table = metrics::subgroup_accuracies(preds, annos);
        int populated = 0;
        for (const auto& [cls, groups] : table.cells)
            for (const auto& [g, cell] : groups) {
                CHECK(cell.accuracy == 1.0);
                ++populated;
            }
        CHECK(populated == 3);  // (cat,1), (dog,0), (dog,2)
        CHECK(table.total_count() == 4);
        CHECK(table.total_accuracy() == 1.0);
    }

    SUBCASE("group universe is inferred from the annotations") {
        std::vector<PredictionRow> preds = {pred(0, "cat", "cat")};
        auto table = metrics::subgroup_accuracies(preds, annos);
        CHECK(table.group_count == 3);  // max annotated index 2
        CHECK(table.others_group == -1);

        auto wide = metrics::subgroup_accuracies(preds, annos, 7, 6);
        CHECK(wide.group_count == 7);
        CHECK(wide.others_group == 6);
    }
}

TEST_CASE("subgroup accuracies validates the join") {
    auto annos = make_annotations({{0, "cat", 0}, {1, "cat", 1}});

    SUBCASE("missing indices are listed") {
        std::vector<PredictionRow> preds = {pred(0, "cat", "cat"), pred(3, "cat", "cat"),
                                            pred(7, "cat", "dog")};
        CHECK_THROWS_WITH_AS(
            metrics::subgroup_accuracies(preds, annos),
            "subgroup accuracies: 2 prediction index(es) missing from annotations: 3, 7",
            JoinError);
    }

    SUBCASE("class labels must agree between the two files") {
        std::vector<PredictionRow> preds = {pred(0, "dog", "dog")};
        CHECK_THROWS_AS(metrics::subgroup_accuracies(preds, annos), JoinError);
    }

    SUBCASE("duplicate prediction indices are rejected") {
        std::vector<PredictionRow> preds = {pred(0, "cat", "cat"), pred(0, "cat", "dog")};
        CHECK_THROWS_AS(metrics::subgroup_accuracies(preds, annos), std::invalid_argument);
    }

    SUBCASE("explicit group universes are enforced") {
        std::vector<PredictionRow> preds = {pred(0, "cat", "cat"), pred(1, "cat", "cat")};
        CHECK_THROWS_AS(metrics::subgroup_accuracies(preds, annos, 1, -1),
                        std::invalid_argument);
        CHECK_THROWS_AS(metrics::subgroup_accuracies(preds, annos, 4, 4),
                        std::invalid_argument);
    }
}

TEST_CASE("class and total accuracies are count-weighted means over cells") {
    // cat: group 0 -> 2/3 correct of 3, group 1 -> 1/1. dog: group 0 -> 0/2.
    auto annos = make_annotations({{0, "cat", 0}, {1, "cat", 0}, {2, "cat", 0},
                                   {3, "cat", 1}, {4, "dog", 0}, {5, "dog", 0}});
    std::vector<PredictionRow> preds = {pred(0, "cat", "cat"), pred(1, "cat", "cat"),
                                        pred(2, "cat", "dog"), pred(3, "cat", "cat"),
                                        pred(4, "dog", "cat"), pred(5, "dog", "cat")};
    auto table = metrics::subgroup_accuracies(preds, annos);

    CHECK(table.class_count("cat") == 4);
    CHECK(table.class_accuracy("cat") == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(table.class_count("dog") == 2);
    CHECK(table.class_accuracy("dog") == 0.0);
    CHECK(table.total_count() == 6);
    CHECK(table.total_accuracy() == doctest::Approx(0.5).epsilon(1e-12));
    CHECK_THROWS_AS(table.class_accuracy("bird"), std::invalid_argument);
}

TEST_CASE("overall weighted std flattens the populated cells") {
    SubgroupAccuracyTable single;
    single.group_count = 3;
    single.cells["cat"][0] = SubgroupCell{3, 0.9};
    single.cells["cat"][2] = SubgroupCell{1, 0.5};
    CHECK(metrics::overall_weighted_std(single) ==
          metrics::weighted_std({0.9, 0.5}, {3.0, 1.0}));

    SubgroupAccuracyTable flat;
    flat.group_count = 2;
    flat.cells["a"][0] = SubgroupCell{4, 0.7};
    flat.cells["a"][1] = SubgroupCell{9, 0.7};
    flat.cells["b"][0] = SubgroupCell{2, 0.7};
    CHECK(metrics::overall_weighted_std(flat) == 0.0);

    SubgroupAccuracyTable three;
    three.group_count = 2;
    three.cells["a"][0] = SubgroupCell{5, 1.0};
    three.cells["a"][1] = SubgroupCell{2, 0.5};
    three.cells["b"][0] = SubgroupCell{3, 0.0};
    // Cells flatten in (class, group) order: the same vectors fed directly.
    CHECK(metrics::overall_weighted_std(three) ==
          metrics::weighted_std({1.0, 0.5, 0.0}, {5.0, 2.0, 3.0}));

    SubgroupAccuracyTable empty;
    CHECK_THROWS_AS(metrics::overall_weighted_std(empty), std::invalid_argument);
}

TEST_CASE("worst subgroup reports the weakest populated cell per class") {
    SubgroupAccuracyTable table;
    table.group_count = 4;
    table.cells["cat"][0] = SubgroupCell{2, 1.0};
    table.cells["cat"][3] = SubgroupCell{2, 0.0};
    table.cells["dog"][1] = SubgroupCell{5, 0.8};
    table.cells["fox"][0] = SubgroupCell{3, 0.6};
    table.cells["fox"][2] = SubgroupCell{3, 0.6};

    auto worst = metrics::worst_subgroup(table);
    REQUIRE(worst.size() == 3);

    CHECK(worst.at("cat").group == 3);
    CHECK(worst.at("cat").accuracy == 0.0);
    CHECK(worst.at("cat").gap == doctest::Approx(0.5).epsilon(1e-12));

    // A single populated group is its own worst case with no gap.
    CHECK(worst.at("dog").group == 1);
    CHECK(worst.at("dog").accuracy == 0.8);
    CHECK(worst.at("dog").gap == doctest::Approx(0.0).epsilon(1e-12));

    // Ties break toward the lowest group index.
    CHECK(worst.at("fox").group == 0);
    CHECK(worst.at("fox").accuracy == 0.6);
}

TEST_CASE("correlation matches hand and oracle computations") {
    std::vector<double> xs = {1, 2, 3, 4, 5};

    CHECK(metrics::correlation(xs, {2, 4, 6, 8, 10}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(metrics::correlation(xs, {4, 3, 2, 1, 0}) == doctest::Approx(-1.0).epsilon(1e-12));

    // Deviations (-2,-1,0,1,2) and (-1,-2,1,0,2): covariance sum 8, both
    // squared sums 10, so the coefficient is 8/10.
    std::vector<double> ys = {2, 1, 4, 3, 5};
    double r = metrics::correlation(xs, ys);
    CHECK(r == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(r == doctest::Approx(static_cast<double>(oracle_pearson(xs, ys))).epsilon(1e-12));

    // The same data is already rank-shaped, so the rank coefficient agrees.
    CHECK(metrics::correlation(xs, ys, CorrelationKind::spearman) ==
          doctest::Approx(0.8).epsilon(1e-12));

    // A monotone nonlinear map has a perfect rank correlation but an
    // imperfect linear one.
    std::vector<double> cubed;
    for (double v : xs) cubed.push_back(v * v * v);
    CHECK(metrics::correlation(xs, cubed, CorrelationKind::spearman) == 1.0);
    CHECK(metrics::correlation(xs, cubed) < 1.0);

    // Ties share average ranks: xs ranks become (1, 2.5, 2.5, 4).
    std::vector<double> tied = {1, 2, 2, 3};
    std::vector<double> straight = {1, 2, 3, 4};
    double tied_r = metrics::correlation(tied, straight, CorrelationKind::spearman);
    CHECK(tied_r == doctest::Approx(static_cast<double>(oracle_pearson(
                        {1.0, 2.5, 2.5, 4.0}, {1.0, 2.0, 3.0, 4.0}))).epsilon(1e-12));
}

TEST_CASE("correlation enforces its preconditions") {
    CHECK_THROWS_AS(metrics::correlation({1, 2}, {3, 4}), std::invalid_argument);
    CHECK_THROWS_AS(metrics::correlation({1, 2, 3}, {3, 4}), std::invalid_argument);
    CHECK_THROWS_AS(metrics::correlation({1, 2, std::nan("")}, {3, 4, 5}),
                    std::invalid_argument);
    CHECK_THROWS_AS(metrics::correlation({2, 2, 2}, {3, 4, 5}), UndefinedCorrelationError);
    CHECK_THROWS_AS(metrics::correlation({3, 4, 5}, {0.1, 0.1, 0.1}),
                    UndefinedCorrelationError);

    CHECK(metrics::correlation_kind_from_name("pearson") == CorrelationKind::pearson);
    CHECK(metrics::correlation_kind_from_name("spearman") == CorrelationKind::spearman);
    CHECK(metrics::correlation_kind_name(CorrelationKind::spearman) == "spearman");
    CHECK_THROWS_AS(metrics::correlation_kind_from_name("kendall"), std::invalid_argument);
}

TEST_CASE("correlation of a linear map recovers the sign of the slope") {
    Rng rng(46);
    for (int trial = 0; trial < 40; ++trial) {
        std::size_t n = 3 + rng.below(20);
        std::vector<double> xs;
        for (std::size_t i = 0; i < n; ++i)
            xs.push_back(static_cast<double>(i) + rng.uniform() * 0.5);  // strictly increasing
        double a = rng.uniform(-3.0, 3.0);
        double b = (0.1 + rng.uniform() * 5.0) * (trial % 2 == 0 ? 1.0 : -1.0);
        std::vector<double> ys;
        for (double v : xs) ys.push_back(a + b * v);

        double sign = b > 0 ? 1.0 : -1.0;
        CHECK(metrics::correlation(xs, ys) == doctest::Approx(sign).epsilon(1e-12));
        CHECK(metrics::correlation(xs, ys, CorrelationKind::spearman) ==
              doctest::Approx(sign).epsilon(1e-12));
    }
}

TEST_CASE("regrouping pools counts and count-weighted accuracies") {
    SubgroupAccuracyTable table;
    table.group_count = 3;
    table.others_group = 2;
    table.cells["cat"][0] = SubgroupCell{3, 0.9};
    table.cells["cat"][1] = SubgroupCell{2, 0.4};
    table.cells["dog"][0] = SubgroupCell{1, 0.5};
    table.cells["car"][1] = SubgroupCell{4, 1.0};

    SUBCASE("identity groupings leave the table unchanged") {
        CHECK(cells_equal(metrics::regroup(table, {}), table));
        std::map<std::string, std::string> identity = {
            {"cat", "cat"}, {"dog", "dog"}, {"car", "car"}};
        CHECK(cells_equal(metrics::regroup(table, identity), table));
    }

    SUBCASE("pooled cells sum counts and average accuracies by count") {
        std::map<std::string, std::string> grouping = {{"cat", "animal"}, {"dog", "animal"}};
        auto pooled = metrics::regroup(table, grouping);
        CHECK(pooled.group_count == 3);
        CHECK(pooled.others_group == 2);
        REQUIRE(pooled.cells.count("animal") == 1);
        CHECK(pooled.cells.count("cat") == 0);
        CHECK(pooled.cells.count("dog") == 0);
        CHECK(pooled.cells.count("car") == 1);

        // Group 0 merges (3, 0.9) and (1, 0.5): 4 examples at mean 0.8.
        REQUIRE(pooled.cell("animal", 0) != nullptr);
        CHECK(pooled.cell("animal", 0)->count == 4);
        CHECK(pooled.cell("animal", 0)->accuracy == doctest::Approx(0.8).epsilon(1e-12));
        // Group 1 only existed under "cat" and is copied verbatim.
        REQUIRE(pooled.cell("animal", 1) != nullptr);
        CHECK(pooled.cell("animal", 1)->count == 2);
        CHECK(pooled.cell("animal", 1)->accuracy == 0.4);
    }
}

TEST_CASE("macro std over superclasses matches hand pooling") {
    SubgroupAccuracyTable table;
    table.group_count = 2;
    table.cells["c0"][0] = SubgroupCell{10, 0.9};
    table.cells["c0"][1] = SubgroupCell{10, 0.5};
    table.cells["c1"][0] = SubgroupCell{20, 0.8};
    table.cells["c1"][1] = SubgroupCell{5, 0.6};
    table.cells["c2"][0] = SubgroupCell{8, 1.0};
    table.cells["c2"][1] = SubgroupCell{2, 0.0};
    table.cells["c3"][0] = SubgroupCell{6, 0.7};
    table.cells["c3"][1] = SubgroupCell{9, 0.3};

    std::map<std::string, std::string> grouping = {
        {"c0", "vehicle"}, {"c1", "vehicle"}, {"c2", "animal"}, {"c3", "animal"}};
    auto pooled = metrics::regroup(table, grouping);
    auto report = metrics::discrepancy_report(pooled);

    // Hand pooling: vehicle group 0 = (30, 25/30), group 1 = (15, 8/15);
    // animal group 0 = (14, 12.2/14), group 1 = (11, 2.7/11).
    std::vector<double> veh_s = {25.0 / 30.0, 8.0 / 15.0};
    std::vector<double> veh_w = {30.0, 15.0};
    std::vector<double> ani_s = {12.2 / 14.0, 2.7 / 11.0};
    std::vector<double> ani_w = {14.0, 11.0};
    long double sig_v = oracle_weighted_std(veh_s, veh_w);
    long double sig_a = oracle_weighted_std(ani_s, ani_w);
    long double want = sqrtl((sig_v * sig_v + sig_a * sig_a) / 2.0L);

    CHECK(report.macro_std == doctest::Approx(static_cast<double>(want)).epsilon(1e-10));
    REQUIRE(report.classes.size() == 2);
    CHECK(report.classes[0].class_label == "animal");
    CHECK(report.classes[1].class_label == "vehicle");
    CHECK(report.classes[1].sigma_w ==
          doctest::Approx(static_cast<double>(sig_v)).epsilon(1e-10));
}

TEST_CASE("discrepancy report assembles every metric") {
    auto annos = make_annotations({{0, "cat", 0}, {1, "cat", 0}, {2, "cat", 1},
                                   {3, "cat", 1}, {4, "dog", 0}, {5, "dog", 0},
                                   {6, "dog", 1}, {7, "dog", 1}});
    std::vector<PredictionRow> preds = {
        pred(0, "cat", "cat"), pred(1, "cat", "cat"), pred(2, "cat", "cat"),
        pred(3, "cat", "dog"), pred(4, "dog", "dog"), pred(5, "dog", "cat"),
        pred(6, "dog", "dog"), pred(7, "dog", "dog")};
    auto table = metrics::subgroup_accuracies(preds, annos, 3, 2);
    auto report = metrics::discrepancy_report(table);

    REQUIRE(report.classes.size() == 2);
    const auto& cat = report.classes[0];
    const auto& dog = report.classes[1];
    CHECK(cat.class_label == "cat");
    CHECK(cat.count == 4);
    CHECK(cat.accuracy == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(cat.sigma_w == metrics::weighted_std({1.0, 0.5}, {2.0, 2.0}));
    CHECK(cat.worst.group == 1);
    CHECK(cat.worst.accuracy == 0.5);
    CHECK(dog.class_label == "dog");
    CHECK(dog.sigma_w == metrics::weighted_std({0.5, 1.0}, {2.0, 2.0}));

    CHECK(report.total_count == 8);
    CHECK(report.total_accuracy == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(report.macro_std == metrics::macro_std({cat.sigma_w, dog.sigma_w}));
    CHECK(report.overall_weighted_std == metrics::overall_weighted_std(table));

    SUBCASE("the JSON carries the fixed field names") {
        auto j = report.to_json();
        REQUIRE(j.contains("per_class_sigma_w"));
        REQUIRE(j.contains("macro_std"));
        REQUIRE(j.contains("overall_weighted_std"));
        REQUIRE(j.contains("total_accuracy"));
        REQUIRE(j.contains("worst_subgroup"));
        CHECK(j["per_class_sigma_w"]["cat"].get<double>() == cat.sigma_w);
        CHECK(j["macro_std"].get<double>() == report.macro_std);
        CHECK(j["total_accuracy"].get<double>() == report.total_accuracy);
        CHECK(j["worst_subgroup"]["cat"]["group"].get<int>() == 1);
        CHECK(j["worst_subgroup"]["dog"]["gap"].get<double>() ==
              doctest::Approx(0.25).epsilon(1e-12));
        CHECK(j["cells"].size() == 4);
    }

    SUBCASE("the flat CSV repeats class and run metrics per cell row") {
        auto lines = split_lines(report.to_csv({"red", "green", "others"}));
        REQUIRE(lines.size() == 5);  // header + one row per populated cell
        CHECK(lines[0] ==
              "class,group,count,accuracy,class_accuracy,class_sigma_w,class_worst_group,"
              "class_worst_accuracy,class_worst_gap,total_accuracy,macro_std,"
              "overall_weighted_std");
        auto row = split_csv_line(lines[1]);
        REQUIRE(row.size() == 12);
        CHECK(row[0] == "cat");
        CHECK(row[1] == "red");
        CHECK(row[2] == "2");
        CHECK(std::stod(row[3]) == 1.0);
        CHECK(std::stod(row[4]) == doctest::Approx(0.75).epsilon(1e-9));
        CHECK(row[6] == "green");  // worst group rendered by name too
        CHECK(std::stod(row[10]) == doctest::Approx(report.macro_std).epsilon(1e-9));

        // Without names, groups come out as bare indices.
        auto plain = split_csv_line(split_lines(report.to_csv())[1]);
        CHECK(plain[1] == "0");
    }
}

TEST_CASE("report excludes the catch-all group only on request") {
    SubgroupAccuracyTable table;
    table.group_count = 3;
    table.others_group = 2;
    table.cells["cat"][0] = SubgroupCell{4, 0.75};
    table.cells["cat"][2] = SubgroupCell{2, 0.0};
    table.cells["dog"][1] = SubgroupCell{4, 0.5};
    table.cells["dog"][2] = SubgroupCell{2, 1.0};
    table.cells["owl"][2] = SubgroupCell{3, 1.0};  // lives only in the catch-all group

    auto with = metrics::discrepancy_report(table);
    CHECK(with.total_count == 15);
    CHECK(with.classes.size() == 3);
    CHECK(with.classes[0].sigma_w ==
          metrics::weighted_std({0.75, 0.0}, {4.0, 2.0}));

    auto without = metrics::discrepancy_report(table, false);
    CHECK(without.total_count == 8);
    REQUIRE(without.classes.size() == 2);  // owl drops out entirely
    CHECK(without.classes[0].class_label == "cat");
    CHECK(without.classes[0].count == 4);
    CHECK(without.classes[0].sigma_w == 0.0);  // one remaining cell
    CHECK(without.classes[1].class_label == "dog");
    CHECK(without.table.cell("cat", 2) == nullptr);

    // The exclusion matches filtering the table up front.
    auto filtered = metrics::discrepancy_report(metrics::exclude_group(table, 2));
    CHECK(without.macro_std == filtered.macro_std);
    CHECK(without.total_accuracy == filtered.total_accuracy);
}

TEST_CASE("report rejects tables without a defined variance") {
    SubgroupAccuracyTable empty;
    CHECK_THROWS_AS(metrics::discrepancy_report(empty), std::invalid_argument);

    SubgroupAccuracyTable tiny;
    tiny.group_count = 2;
    tiny.cells["cat"][0] = SubgroupCell{5, 0.8};
    tiny.cells["dog"][1] = SubgroupCell{1, 1.0};
    CHECK_THROWS_WITH_AS(metrics::discrepancy_report(tiny),
                         "discrepancy report: class \"dog\" has 1 example(s); "
                         "weighted std undefined",
                         UndefinedVarianceError);
}

TEST_CASE("every metric is invariant to prediction row order") {
    Rng rng(47);
    std::vector<std::tuple<std::size_t, std::string, int>> anno_rows;
    std::vector<PredictionRow> preds;
    const std::vector<std::string> classes = {"a", "b", "c"};
    for (std::size_t i = 0; i < 120; ++i) {
        std::string cls = classes[rng.below(classes.size())];
        int grp = static_cast<int>(rng.below(3));
        anno_rows.push_back({i, cls, grp});
        std::string guess = rng.uniform() < 0.7 ? cls : classes[rng.below(classes.size())];
        preds.push_back(pred(i, cls, guess));
    }
    auto annos = make_annotations(anno_rows);
    auto base = metrics::subgroup_accuracies(preds, annos);

    std::vector<PredictionRow> shuffled = preds;
    for (std::size_t i = shuffled.size(); i > 1; --i)
        std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
    auto again = metrics::subgroup_accuracies(shuffled, annos);

    CHECK(cells_equal(base, again));
    CHECK(metrics::discrepancy_report(base).to_json().dump() ==
          metrics::discrepancy_report(again).to_json().dump());
}

TEST_CASE("prediction files round trip and reject malformed rows") {
    TempDir dir;
    std::vector<PredictionRow> rows = {pred(2, "cat", "dog"), pred(0, "dog", "dog"),
                                       pred(5, "owl", "owl")};
    metrics::save_predictions(rows, dir.file("preds.csv"));
    auto loaded = metrics::load_predictions(dir.file("preds.csv"));
    REQUIRE(loaded.size() == 3);
    for (std::size_t i = 0; i < rows.size(); ++i) {  // file order preserved
        CHECK(loaded[i].index == rows[i].index);
        CHECK(loaded[i].true_class == rows[i].true_class);
        CHECK(loaded[i].pred_class == rows[i].pred_class);
    }

    auto write = [&](const std::string& name, const std::string& text) {
        std::ofstream out(dir.file(name));
        out << text;
        return dir.file(name);
    };
    CHECK_THROWS_AS(metrics::load_predictions(dir.file("absent.csv")), std::runtime_error);
    CHECK_THROWS_AS(metrics::load_predictions(
                        write("bad_header.csv", "idx,true,pred\n0,a,b\n")),
                    std::runtime_error);
    CHECK_THROWS_AS(metrics::load_predictions(
                        write("short_row.csv", "index,true_class,pred_class\n0,a\n")),
                    std::runtime_error);
    CHECK_THROWS_AS(metrics::load_predictions(
                        write("long_row.csv", "index,true_class,pred_class\n0,a,b,c\n")),
                    std::runtime_error);
    CHECK_THROWS_AS(metrics::load_predictions(
                        write("bad_index.csv", "index,true_class,pred_class\nx,a,b\n")),
                    std::runtime_error);
    CHECK_THROWS_AS(metrics::load_predictions(
                        write("dup.csv", "index,true_class,pred_class\n0,a,b\n0,a,b\n")),
                    std::runtime_error);

    // Windows line endings parse cleanly.
    auto crlf = metrics::load_predictions(
        write("crlf.csv", "index,true_class,pred_class\r\n3,cat,cat\r\n"));
    REQUIRE(crlf.size() == 1);
    CHECK(crlf[0].index == 3);
    CHECK(crlf[0].pred_class == "cat");
}

TEST_CASE("run summaries carry the cross-method comparison format") {
    SubgroupAccuracyTable table;
    table.group_count = 2;
    table.cells["a"][0] = SubgroupCell{3, 0.9};
    table.cells["a"][1] = SubgroupCell{1, 0.5};
    table.cells["b"][0] = SubgroupCell{4, 0.75};
    auto report = metrics::discrepancy_report(table);

    auto row = metrics::make_run_summary("flowaug_gauss", 7, report);
    CHECK(row.method == "flowaug_gauss");
    CHECK(row.seed == 7);
    CHECK(row.total_accuracy == report.total_accuracy);
    CHECK(row.macro_std == report.macro_std);
    CHECK(row.weighted_std == report.overall_weighted_std);

    auto j = row.to_json();
    CHECK(j["method"].get<std::string>() == "flowaug_gauss");
    CHECK(j["weighted_std"].get<double>() == report.overall_weighted_std);

    metrics::RunSummary fixed;
    fixed.method = "standard";
    fixed.seed = 3;
    fixed.total_accuracy = 0.875;
    fixed.macro_std = 0.14142135;
    fixed.weighted_std = 0.2;
    CHECK(metrics::run_summary_csv({fixed}) ==
          "method,seed,total_accuracy,macro_std,weighted_std\n"
          "standard,3,0.8750,0.1414,0.2000\n");
    CHECK(metrics::run_summary_csv({fixed}, 2) ==
          "method,seed,total_accuracy,macro_std,weighted_std\n"
          "standard,3,0.88,0.14,0.20\n");
    CHECK_THROWS_AS(metrics::run_summary_csv({fixed}, -1), std::invalid_argument);
}
