#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "flowlab/core/rng.hpp"
#include "flowlab/synth/annotations.hpp"
#include "flowlab/synth/dataset.hpp"
#include "flowlab/synth/palette.hpp"
#include "flowlab/synth/render.hpp"

using namespace flowlab;
using namespace flowlab::synth;
namespace fs = std::filesystem;

namespace {

// Hue oracle written from the standard max/min sector formula, independent
// of the library's conversion helper.
float oracle_hue(float r, float g, float b) {
    float mx = std::max({r, g, b});
    float mn = std::min({r, g, b});
    float d = mx - mn;
    if (d <= 0.0f) return 0.0f;
    float h;
    if (mx == r)
        h = std::fmod((g - b) / d, 6.0f);
    else if (mx == g)
        h = (b - r) / d + 2.0f;
    else
        h = (r - g) / d + 4.0f;
    h *= 60.0f;
    if (h < 0.0f) h += 360.0f;
    return h;
}

// Scratch directory removed when the guard leaves scope.
struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("flowlab_synth_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

Palette sub_palette(int n) {
    Palette full = Palette::default_palette();
    const auto& all = full.groups();
    std::vector<ColorGroup> groups(all.begin(), all.begin() + n);
    return Palette(groups);
}

DatasetSpec small_spec(int num_classes, int palette_n, int n_train, int n_test, double rho,
                       std::uint64_t seed) {
    DatasetSpec spec = DatasetSpec::defaults(num_classes);
    spec.render.palette = sub_palette(palette_n);
    spec.n_train = n_train;
    spec.n_test = n_test;
    spec.rho = rho;
    spec.seed = seed;
    return spec;
}

}  // namespace

TEST_CASE("rendering is deterministic and seed-jittered") {
    auto cfg = RenderConfig::defaults(4);
    Image a = render_example(cfg, 0, 0, 7);
    Image b = render_example(cfg, 0, 0, 7);
    CHECK(a.pix == b.pix);

    Image c = render_example(cfg, 0, 0, 8);
    CHECK(a.pix != c.pix);
}

TEST_CASE("foreground is invariant to the background group") {
    auto cfg = RenderConfig::defaults(4);
    for (int cls = 0; cls < 4; ++cls) {
        auto a = render_example_with_mask(cfg, cls, 0, 41 + cls);
        auto b = render_example_with_mask(cfg, cls, 2, 41 + cls);
        REQUIRE(a.foreground == b.foreground);
        bool bg_differs = false;
        for (std::size_t p = 0; p < a.foreground.size(); ++p) {
            for (int ch = 0; ch < 3; ++ch) {
                float va = a.image.pix[p * 3 + ch];
                float vb = b.image.pix[p * 3 + ch];
                if (a.foreground[p]) {
                    CHECK(va == vb);
                } else if (va != vb) {
                    bg_differs = true;
                }
            }
        }
        CHECK(bg_differs);  // blue vs red fills cannot coincide
    }
}

TEST_CASE("foreground covers 20-60% of pixels for every shape") {
    auto cfg = RenderConfig::defaults(8);  // exercises all shapes
    const float total = static_cast<float>(cfg.height) * static_cast<float>(cfg.width);
    for (int cls = 0; cls < 8; ++cls) {
        for (std::uint64_t seed = 0; seed < 60; ++seed) {
            auto ex = render_example_with_mask(cfg, cls, cls % cfg.palette.size(), seed);
            float on = 0;
            for (auto m : ex.foreground) on += m;
            float frac = on / total;
            CAPTURE(cls);
            CAPTURE(seed);
            CHECK(frac >= 0.20f);
            CHECK(frac <= 0.60f);
        }
    }
}

TEST_CASE("average background hue of green renders stays in the green interval") {
    auto cfg = RenderConfig::defaults(4);
    auto green = cfg.palette.find("green");
    REQUIRE(green.has_value());
    const auto& grp = cfg.palette.group(*green);
    REQUIRE(grp.hue_tol > 0.0f);

    double hue_sum = 0.0;
    std::size_t n = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto ex = render_example_with_mask(cfg, static_cast<int>(seed % 4), *green, seed);
        for (std::size_t p = 0; p < ex.foreground.size(); ++p) {
            if (ex.foreground[p]) continue;
            hue_sum += oracle_hue(ex.image.pix[p * 3], ex.image.pix[p * 3 + 1],
                                  ex.image.pix[p * 3 + 2]);
            ++n;
        }
    }
    REQUIRE(n > 0);
    double mean_hue = hue_sum / static_cast<double>(n);
    CHECK(std::abs(mean_hue - grp.hue_center) <= grp.hue_tol);
}

TEST_CASE("class colors stay clear of every jittered background region") {
    auto cfg = RenderConfig::defaults(8);
    for (const auto& fg : cfg.class_colors) {
        for (const auto& grp : cfg.palette.groups()) {
            float linf = 0.0f;
            for (int ch = 0; ch < 3; ++ch) linf = std::max(linf, std::abs(fg[ch] - grp.rgb[ch]));
            CHECK(linf > grp.jitter + 0.05f);
        }
    }
}

TEST_CASE("out-of-range class or group is rejected") {
    auto cfg = RenderConfig::defaults(4);
    CHECK_THROWS_AS(render_example(cfg, 4, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(render_example(cfg, -1, 0, 1), std::invalid_argument);
    // "others" (== palette.size()) is a legal annotation but not renderable.
    CHECK_THROWS_AS(render_example(cfg, 0, cfg.palette.size(), 1), std::invalid_argument);
    CHECK_THROWS_AS(render_example(cfg, 0, -1, 1), std::invalid_argument);
}

TEST_CASE("rho=1 pins every train background to the class color") {
    auto spec = small_spec(4, 6, 400, 24, 1.0, 3);
    auto ds = generate_dataset(spec);
    for (int i = 0; i < spec.n_train; ++i) {
        CHECK(ds.train[static_cast<std::size_t>(i)].class_label == i % 4);
        CHECK(ds.train[static_cast<std::size_t>(i)].bg_group ==
              spec.class_color(ds.train[static_cast<std::size_t>(i)].class_label));
    }
}

TEST_CASE("rho=0 spreads train backgrounds uniformly within a binomial bound") {
    auto spec = small_spec(4, 6, 6000, 24, 0.0, 11);
    std::vector<int> counts(6, 0);
    for (int i = 0; i < spec.n_train; ++i)
        counts[static_cast<std::size_t>(generate_train_example(spec, i).bg_group)]++;

    const double p = 1.0 / 6.0;
    const double sd = std::sqrt(p * (1.0 - p) / 6000.0);
    for (int g = 0; g < 6; ++g) {
        double freq = counts[static_cast<std::size_t>(g)] / 6000.0;
        CAPTURE(g);
        CHECK(std::abs(freq - p) <= 3.0 * sd);
    }
}

TEST_CASE("empirical class-color rate matches rho plus uniform leakage") {
    const double rho = 0.95;
    auto spec = small_spec(4, 6, 10000, 24, rho, 5);
    int hits = 0;
    for (int i = 0; i < spec.n_train; ++i) {
        auto ex = generate_train_example(spec, i);
        if (ex.bg_group == spec.class_color(ex.class_label)) ++hits;
    }
    double expect = rho + (1.0 - rho) / 6.0;
    CHECK(std::abs(hits / 10000.0 - expect) <= 0.02);
}

TEST_CASE("test matrix is exactly balanced regardless of rho") {
    for (double rho : {0.3, 0.95}) {
        auto spec = small_spec(4, 6, 48, 1200, rho, 9);
        auto ds = generate_dataset(spec);
        std::vector<int> cell(4 * 6, 0);
        for (const auto& ex : ds.test)
            cell[static_cast<std::size_t>(ex.class_label * 6 + ex.bg_group)]++;
        for (int c : cell) CHECK(c == 50);
    }
}

TEST_CASE("unbalanced test size is rejected up front") {
    auto spec = small_spec(4, 6, 48, 1199, 0.5, 9);
    CHECK_THROWS_AS(generate_dataset(spec), std::invalid_argument);
}

TEST_CASE("generation is a pure function of (spec, split, index)") {
    auto spec = small_spec(3, 4, 60, 24, 0.8, 21);
    auto ds = generate_dataset(spec);
    // Regenerating out of order reproduces the same examples bit for bit.
    for (int i : {59, 0, 17}) {
        auto ex = generate_train_example(spec, i);
        CHECK(ex.image.pix == ds.train[static_cast<std::size_t>(i)].image.pix);
        CHECK(ex.class_label == ds.train[static_cast<std::size_t>(i)].class_label);
        CHECK(ex.bg_group == ds.train[static_cast<std::size_t>(i)].bg_group);
    }
    for (int i : {23, 4}) {
        auto ex = generate_test_example(spec, i);
        CHECK(ex.image.pix == ds.test[static_cast<std::size_t>(i)].image.pix);
    }
    // A different seed changes the data.
    auto spec2 = spec;
    spec2.seed = 22;
    CHECK(generate_train_example(spec2, 0).image.pix != ds.train[0].image.pix);
}

TEST_CASE("dataset save/load round trips bit-exactly") {
    TempDir tmp("roundtrip");
    auto spec = small_spec(2, 3, 10, 6, 0.9, 77);
    auto ds = generate_dataset(spec);
    save_dataset(ds, tmp.path.string());

    auto expected_bytes = static_cast<std::uintmax_t>((10 + 6) * spec.render.height *
                                                      spec.render.width * 3);
    CHECK(fs::file_size(tmp.path / "images.bin") == expected_bytes);

    auto back = load_dataset(tmp.path.string());
    REQUIRE(back.train.size() == ds.train.size());
    REQUIRE(back.test.size() == ds.test.size());
    CHECK(back.spec.rho == ds.spec.rho);
    CHECK(back.spec.seed == ds.spec.seed);
    CHECK(back.spec.num_classes == ds.spec.num_classes);
    CHECK(back.spec.render.palette.size() == 3);
    CHECK(back.spec.render.palette.name(1) == "green");
    for (std::size_t i = 0; i < ds.train.size(); ++i) {
        CHECK(back.train[i].image.pix == ds.train[i].image.pix);
        CHECK(back.train[i].class_label == ds.train[i].class_label);
        CHECK(back.train[i].bg_group == ds.train[i].bg_group);
    }
    for (std::size_t i = 0; i < ds.test.size(); ++i) {
        CHECK(back.test[i].image.pix == ds.test[i].image.pix);
        CHECK(back.test[i].class_label == ds.test[i].class_label);
        CHECK(back.test[i].bg_group == ds.test[i].bg_group);
    }
}

TEST_CASE("truncated images.bin is a length-mismatch error") {
    TempDir tmp("truncated");
    auto spec = small_spec(2, 3, 4, 6, 0.9, 78);
    save_dataset(generate_dataset(spec), tmp.path.string());
    fs::resize_file(tmp.path / "images.bin", fs::file_size(tmp.path / "images.bin") - 1);
    CHECK_THROWS_WITH_AS(load_dataset(tmp.path.string()),
                         doctest::Contains("length mismatch"), std::runtime_error);
}

TEST_CASE("corrupt meta.json is a format error") {
    TempDir tmp("corrupt");
    auto spec = small_spec(2, 3, 4, 6, 0.9, 79);
    save_dataset(generate_dataset(spec), tmp.path.string());
    std::ofstream(tmp.path / "meta.json") << "{not json";
    CHECK_THROWS_WITH_AS(load_dataset(tmp.path.string()), doctest::Contains("corrupt"),
                         std::runtime_error);
}

TEST_CASE("annotation parsing accepts palette names and others") {
    TempDir tmp("ann_ok");
    auto csv = tmp.path / "ann.csv";
    std::ofstream(csv) << "index,class_label,bg_group\n0,cat,blue\n1,dog,others\n";
    auto palette = Palette::default_palette();
    auto table = load_annotations(csv.string(), palette);
    REQUIRE(table.size() == 2);
    CHECK(table.rows.at(0).class_label == "cat");
    CHECK(table.rows.at(0).bg_group == *palette.find("blue"));
    CHECK(table.rows.at(1).class_label == "dog");
    CHECK(table.rows.at(1).bg_group == palette.others_index());
}

TEST_CASE("annotation errors name the offending data row") {
    TempDir tmp("ann_err");
    auto palette = Palette::default_palette();

    auto write = [&](const char* name, const std::string& body) {
        auto p = tmp.path / name;
        std::ofstream(p) << body;
        return p.string();
    };

    auto dup = write("dup.csv", "index,class_label,bg_group\n0,cat,blue\n0,dog,red\n");
    CHECK_THROWS_WITH_AS(load_annotations(dup, palette),
                         doctest::Contains("duplicate index 0 at row 2"), std::runtime_error);

    auto missing = write("missing.csv", "index,class_label,bg_group\n0,cat,blue\n1,dog\n");
    CHECK_THROWS_WITH_AS(load_annotations(missing, palette),
                         doctest::Contains("missing column at row 2"), std::runtime_error);

    auto unknown = write("unknown.csv", "index,class_label,bg_group\n0,cat,navy\n");
    CHECK_THROWS_WITH_AS(load_annotations(unknown, palette),
                         doctest::Contains("unknown group \"navy\" at row 1"), std::runtime_error);

    // The same file parses once an alias maps navy onto a palette group.
    auto table = load_annotations(unknown, palette, {{"navy", "blue"}});
    CHECK(table.rows.at(0).bg_group == *palette.find("blue"));

    auto badhdr = write("badhdr.csv", "idx,label,group\n0,cat,blue\n");
    CHECK_THROWS_WITH_AS(load_annotations(badhdr, palette),
                         doctest::Contains("missing column header"), std::runtime_error);
}

TEST_CASE("annotation save/load round trips 1000 random tables") {
    TempDir tmp("ann_prop");
    auto palette = Palette::default_palette();
    const char* vocab[] = {"cat", "dog", "ship", "truck", "3", "x"};
    auto file = (tmp.path / "t.csv").string();

    Rng rng(derive_seed(2024, "annotation-roundtrip"));
    for (int iter = 0; iter < 1000; ++iter) {
        AnnotationTable table;
        auto entries = rng.below(21);
        for (std::uint64_t k = 0; k < entries; ++k) {
            std::size_t index = rng.below(10000);
            table.rows[index] = {vocab[rng.below(6)],
                                 static_cast<int>(rng.below(
                                     static_cast<std::uint64_t>(palette.index_count())))};
        }
        save_annotations(table, palette, file);
        auto back = load_annotations(file, palette);
        REQUIRE(back.size() == table.size());
        for (const auto& [idx, entry] : table.rows) {
            CHECK(back.rows.at(idx).class_label == entry.class_label);
            CHECK(back.rows.at(idx).bg_group == entry.bg_group);
        }
    }
}
