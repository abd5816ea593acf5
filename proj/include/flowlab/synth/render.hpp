#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "flowlab/core/image.hpp"
#include "flowlab/synth/palette.hpp"

namespace flowlab::synth {

enum class Shape { disk, square, triangle, cross, ring, diamond, hbar, vbar };

Shape shape_from_name(const std::string& name);
std::string shape_name(Shape s);

/// The default per-class foreground colors. Deliberately disjoint from every
/// default background group so the class signal never lives in the same hue
/// region as the spurious background signal.
std::array<float, 3> default_class_color(int class_label);

struct RenderConfig {
    int height = 32;
    int width = 32;
    Palette palette = Palette::default_palette();
    std::vector<Shape> shapes;                       // one per class
    std::vector<std::array<float, 3>> class_colors;  // one per class

    /// Config with C classes using the default shape/color cycles.
    static RenderConfig defaults(int num_classes);

    int num_classes() const { return static_cast<int>(shapes.size()); }
    void validate() const;
};

struct RenderedExample {
    Image image;
    std::vector<std::uint8_t> foreground;  // h*w mask, 1 = foreground pixel
};

/// Rasterizes one example: a flat-colored class shape (position/scale
/// jittered by the seed) over a background filled from the group's color
/// region with bounded per-pixel jitter. Deterministic in all arguments.
/// The foreground always covers 20-60% of the pixels.
RenderedExample render_example_with_mask(const RenderConfig& cfg, int class_label, int bg_group,
                                         std::uint64_t jitter_seed);

Image render_example(const RenderConfig& cfg, int class_label, int bg_group,
                     std::uint64_t jitter_seed);

}  // namespace flowlab::synth
