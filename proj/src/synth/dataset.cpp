#include "flowlab/synth/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "flowlab/core/rng.hpp"

namespace flowlab::synth {

namespace fs = std::filesystem;
using nlohmann::json;

DatasetSpec DatasetSpec::defaults(int num_classes) {
    DatasetSpec spec;
    spec.num_classes = num_classes;
    spec.render = RenderConfig::defaults(num_classes);
    return spec;
}

void DatasetSpec::validate() const {
    if (num_classes < 1) throw std::invalid_argument("dataset spec: num_classes must be >= 1");
    if (n_train <= 0 || n_test <= 0) throw std::invalid_argument("dataset spec: counts must be > 0");
    if (rho < 0.0 || rho > 1.0) throw std::invalid_argument("dataset spec: rho must be in [0,1]");
    render.validate();
    if (render.num_classes() != num_classes)
        throw std::invalid_argument("dataset spec: render config classes != num_classes");
    const int cells = num_classes * render.palette.size();
    if (n_test % cells != 0)
        throw std::invalid_argument(
            "dataset spec: n_test must be a multiple of num_classes * palette size (" +
            std::to_string(cells) + ") for an exactly balanced test matrix");
}

int DatasetSpec::class_color(int class_label) const {
    return class_label % render.palette.size();
}

LabeledExample generate_train_example(const DatasetSpec& spec, int index) {
    Rng rng(derive_seed(spec.seed, "train", static_cast<std::uint64_t>(index)));
    LabeledExample ex;
    ex.class_label = index % spec.num_classes;
    const int palette_n = spec.render.palette.size();
    if (rng.uniform() < spec.rho) {
        ex.bg_group = spec.class_color(ex.class_label);
    } else {
        ex.bg_group = static_cast<int>(rng.below(static_cast<std::uint64_t>(palette_n)));
    }
    ex.image = render_example(spec.render, ex.class_label, ex.bg_group, rng.next_u64());
    return ex;
}

LabeledExample generate_test_example(const DatasetSpec& spec, int index) {
    Rng rng(derive_seed(spec.seed, "test", static_cast<std::uint64_t>(index)));
    LabeledExample ex;
    const int palette_n = spec.render.palette.size();
    int cell = index % (spec.num_classes * palette_n);
    ex.class_label = cell / palette_n;
    ex.bg_group = cell % palette_n;
    ex.image = render_example(spec.render, ex.class_label, ex.bg_group, rng.next_u64());
    return ex;
}

Dataset generate_dataset(const DatasetSpec& spec) {
    spec.validate();
    Dataset ds;
    ds.spec = spec;
    ds.train.reserve(static_cast<std::size_t>(spec.n_train));
    ds.test.reserve(static_cast<std::size_t>(spec.n_test));
    for (int i = 0; i < spec.n_train; ++i) ds.train.push_back(generate_train_example(spec, i));
    for (int i = 0; i < spec.n_test; ++i) ds.test.push_back(generate_test_example(spec, i));
    return ds;
}

namespace {

json palette_to_json(const Palette& p) {
    json arr = json::array();
    for (const auto& g : p.groups()) {
        arr.push_back({{"name", g.name},
                       {"rgb", {g.rgb[0], g.rgb[1], g.rgb[2]}},
                       {"jitter", g.jitter},
                       {"hue_center", g.hue_center},
                       {"hue_tol", g.hue_tol}});
    }
    return arr;
}

Palette palette_from_json(const json& arr) {
    std::vector<ColorGroup> groups;
    for (const auto& j : arr) {
        ColorGroup g;
        g.name = j.at("name").get<std::string>();
        auto rgb = j.at("rgb");
        g.rgb = {rgb.at(0).get<float>(), rgb.at(1).get<float>(), rgb.at(2).get<float>()};
        g.jitter = j.value("jitter", 0.06f);
        g.hue_center = j.value("hue_center", 0.0f);
        g.hue_tol = j.value("hue_tol", -1.0f);
        groups.push_back(std::move(g));
    }
    return Palette(groups);
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& dir) {
    fs::create_directories(dir);

    json meta;
    meta["num_classes"] = ds.spec.num_classes;
    meta["height"] = ds.spec.render.height;
    meta["width"] = ds.spec.render.width;
    meta["palette"] = palette_to_json(ds.spec.render.palette);
    json shapes = json::array();
    for (auto s : ds.spec.render.shapes) shapes.push_back(shape_name(s));
    meta["shapes"] = shapes;
    json colors = json::array();
    for (const auto& c : ds.spec.render.class_colors) colors.push_back({c[0], c[1], c[2]});
    meta["class_colors"] = colors;
    meta["rho"] = ds.spec.rho;
    meta["seed"] = ds.spec.seed;
    meta["n_train"] = ds.train.size();
    meta["n_test"] = ds.test.size();
    {
        std::ofstream out(fs::path(dir) / "meta.json");
        if (!out) throw std::runtime_error("save_dataset: cannot write meta.json in " + dir);
        out << meta.dump(2) << "\n";
    }
    {
        std::ofstream out(fs::path(dir) / "images.bin", std::ios::binary);
        if (!out) throw std::runtime_error("save_dataset: cannot write images.bin in " + dir);
        auto dump_split = [&](const std::vector<LabeledExample>& split) {
            for (const auto& ex : split) {
                auto bytes = image_to_bytes(ex.image);
                out.write(reinterpret_cast<const char*>(bytes.data()),
                          static_cast<std::streamsize>(bytes.size()));
            }
        };
        dump_split(ds.train);
        dump_split(ds.test);
    }
    {
        std::ofstream out(fs::path(dir) / "labels.csv");
        if (!out) throw std::runtime_error("save_dataset: cannot write labels.csv in " + dir);
        out << "index,split,class_label,bg_group\n";
        std::size_t idx = 0;
        for (const auto& ex : ds.train) {
            out << idx++ << ",train," << ex.class_label << ","
                << ds.spec.render.palette.name(ex.bg_group) << "\n";
        }
        for (const auto& ex : ds.test) {
            out << idx++ << ",test," << ex.class_label << ","
                << ds.spec.render.palette.name(ex.bg_group) << "\n";
        }
    }
}

Dataset load_dataset(const std::string& dir) {
    const fs::path root(dir);
    json meta;
    {
        std::ifstream in(root / "meta.json");
        if (!in) throw std::runtime_error("load_dataset: missing meta.json in " + dir);
        try {
            in >> meta;
        } catch (const json::exception& e) {
            throw std::runtime_error("load_dataset: corrupt meta.json: " + std::string(e.what()));
        }
    }

    Dataset ds;
    DatasetSpec& spec = ds.spec;
    try {
        spec.num_classes = meta.at("num_classes").get<int>();
        spec.render.height = meta.at("height").get<int>();
        spec.render.width = meta.at("width").get<int>();
        spec.render.palette = palette_from_json(meta.at("palette"));
        spec.render.shapes.clear();
        for (const auto& s : meta.at("shapes")) spec.render.shapes.push_back(shape_from_name(s));
        spec.render.class_colors.clear();
        for (const auto& c : meta.at("class_colors"))
            spec.render.class_colors.push_back({c.at(0).get<float>(), c.at(1).get<float>(), c.at(2).get<float>()});
        spec.rho = meta.at("rho").get<double>();
        spec.seed = meta.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw std::runtime_error("load_dataset: corrupt meta.json header: " + std::string(e.what()));
    }
    const auto n_train = meta.at("n_train").get<std::size_t>();
    const auto n_test = meta.at("n_test").get<std::size_t>();
    spec.n_train = static_cast<int>(n_train);
    spec.n_test = static_cast<int>(n_test);

    const int h = spec.render.height;
    const int w = spec.render.width;
    const std::size_t img_bytes = static_cast<std::size_t>(h) * w * 3;

    std::vector<std::uint8_t> raw;
    {
        std::ifstream in(root / "images.bin", std::ios::binary | std::ios::ate);
        if (!in) throw std::runtime_error("load_dataset: missing images.bin in " + dir);
        const auto file_size = static_cast<std::size_t>(in.tellg());
        const std::size_t want = (n_train + n_test) * img_bytes;
        if (file_size != want)
            throw std::runtime_error("load_dataset: images.bin length mismatch: have " +
                                     std::to_string(file_size) + " bytes, expected " +
                                     std::to_string(want));
        raw.resize(file_size);
        in.seekg(0);
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(file_size));
        if (!in) throw std::runtime_error("load_dataset: short read on images.bin");
    }

    struct Row {
        std::string split;
        int class_label;
        int bg_group;
    };
    std::vector<Row> rows;
    {
        std::ifstream in(root / "labels.csv");
        if (!in) throw std::runtime_error("load_dataset: missing labels.csv in " + dir);
        std::string line;
        if (!std::getline(in, line) || line != "index,split,class_label,bg_group")
            throw std::runtime_error("load_dataset: labels.csv has wrong header");
        std::size_t expect_idx = 0;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::istringstream ss(line);
            std::string idx_s, split, cls_s, grp_s;
            if (!std::getline(ss, idx_s, ',') || !std::getline(ss, split, ',') ||
                !std::getline(ss, cls_s, ',') || !std::getline(ss, grp_s))
                throw std::runtime_error("load_dataset: malformed labels.csv row " +
                                         std::to_string(expect_idx + 1));
            if (std::stoull(idx_s) != expect_idx)
                throw std::runtime_error("load_dataset: labels.csv indices out of order at row " +
                                         std::to_string(expect_idx + 1));
            auto grp = spec.render.palette.find(grp_s);
            if (!grp)
                throw std::runtime_error("load_dataset: unknown bg_group \"" + grp_s +
                                         "\" at row " + std::to_string(expect_idx + 1));
            rows.push_back({split, std::stoi(cls_s), *grp});
            ++expect_idx;
        }
    }
    if (rows.size() != n_train + n_test)
        throw std::runtime_error("load_dataset: labels.csv row count mismatch");

    auto take = [&](std::size_t begin, std::size_t count, const char* split_name,
                    std::vector<LabeledExample>& out) {
        out.reserve(count);
        for (std::size_t i = begin; i < begin + count; ++i) {
            if (rows[i].split != split_name)
                throw std::runtime_error("load_dataset: labels.csv split mismatch at index " +
                                         std::to_string(i));
            LabeledExample ex;
            ex.class_label = rows[i].class_label;
            ex.bg_group = rows[i].bg_group;
            ex.image = image_from_bytes(h, w, raw.data() + i * img_bytes);
            out.push_back(std::move(ex));
        }
    };
    take(0, n_train, "train", ds.train);
    take(n_train, n_test, "test", ds.test);
    return ds;
}

}  // namespace flowlab::synth
