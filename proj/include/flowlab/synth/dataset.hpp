#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowlab/core/image.hpp"
#include "flowlab/synth/render.hpp"

namespace flowlab::synth {

struct LabeledExample {
    Image image;
    int class_label = 0;
    int bg_group = 0;
};

/// Full recipe for a procedurally generated dataset. Generation is a pure
/// function of this struct: per-example randomness is derived from
/// (seed, split, index), so examples can be produced in any order.
struct DatasetSpec {
    int num_classes = 4;
    int n_train = 4000;
    int n_test = 1280;  // must be a multiple of num_classes * palette size
    double rho = 0.95;  // P(train background = class color)
    std::uint64_t seed = 1;
    RenderConfig render;  // palette, shapes, class colors, H, W

    static DatasetSpec defaults(int num_classes = 4);
    void validate() const;

    /// The background group spuriously associated with a class.
    int class_color(int class_label) const;
};

struct Dataset {
    DatasetSpec spec;
    std::vector<LabeledExample> train;
    std::vector<LabeledExample> test;
};

/// Train backgrounds follow the rho-biased rule; test backgrounds cycle
/// through every (class, group) cell so the test matrix is exactly balanced.
Dataset generate_dataset(const DatasetSpec& spec);

/// Single-example accessors used for order-independence tests and lazy paths.
LabeledExample generate_train_example(const DatasetSpec& spec, int index);
LabeledExample generate_test_example(const DatasetSpec& spec, int index);

/// Directory layout: meta.json, images.bin (train then test, row-major
/// H*W*3 bytes per image), labels.csv (index,split,class_label,bg_group).
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace flowlab::synth
