#include "flowlab/synth/render.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "flowlab/core/rng.hpp"

namespace flowlab::synth {

namespace {

const char* kShapeNames[] = {"disk", "square", "triangle", "cross", "ring", "diamond", "hbar", "vbar"};

struct ShapeParams {
    Shape shape;
    float cx, cy;  // center in pixel units
    float size;    // shape-specific primary extent
};

// Area-fraction window per shape, chosen so the rasterized foreground stays
// within the 20-60% contract after the size->pixels mapping below.
struct FracRange {
    float lo, hi;
};

FracRange frac_range(Shape s) {
    switch (s) {
        case Shape::disk: return {0.24f, 0.50f};
        case Shape::square: return {0.24f, 0.55f};
        case Shape::triangle: return {0.24f, 0.36f};
        case Shape::cross: return {0.26f, 0.42f};
        case Shape::ring: return {0.24f, 0.40f};
        case Shape::diamond: return {0.24f, 0.45f};
        case Shape::hbar: return {0.24f, 0.34f};
        case Shape::vbar: return {0.24f, 0.34f};
    }
    return {0.25f, 0.35f};
}

// Primary size (a radius-like half extent) from the requested area fraction.
float size_from_frac(Shape s, float frac, float hw) {
    float target = frac * hw;
    switch (s) {
        case Shape::disk: return std::sqrt(target / 3.14159265f);
        case Shape::square: return 0.5f * std::sqrt(target);
        case Shape::triangle: return std::sqrt(2.0f * target);      // box side; area = side^2 / 2
        case Shape::cross: return std::sqrt(9.0f * target / 5.0f);  // bar length, width = l/3
        case Shape::ring: return std::sqrt(target / (0.6975f * 3.14159265f));
        case Shape::diamond: return std::sqrt(target / 2.0f);  // half-diagonal
        case Shape::hbar:
        case Shape::vbar: return std::sqrt(target / 0.4f);  // bar length, thickness 0.4 l
    }
    return 1.0f;
}

// Margin the center must keep from the border so the shape fits.
float center_margin(Shape s, float size) {
    switch (s) {
        case Shape::disk: return size + 0.5f;
        case Shape::square: return size + 0.5f;
        case Shape::triangle: return 0.5f * size + 0.5f;
        case Shape::cross: return 0.5f * size + 0.5f;
        case Shape::ring: return size + 0.5f;
        case Shape::diamond: return size + 0.5f;
        case Shape::hbar:
        case Shape::vbar: return 0.5f * size + 0.5f;
    }
    return size;
}

bool inside(const ShapeParams& p, float px, float py) {
    float dx = px - p.cx;
    float dy = py - p.cy;
    switch (p.shape) {
        case Shape::disk: return dx * dx + dy * dy <= p.size * p.size;
        case Shape::square: return std::fabs(dx) <= p.size && std::fabs(dy) <= p.size;
        case Shape::triangle: {
            // Upward isoceles triangle in a size x size box centered at (cx, cy).
            float h = p.size;
            float y = dy + 0.5f * h;  // 0 at apex, h at base
            if (y < 0.0f || y > h) return false;
            float half_width = 0.5f * y;
            return std::fabs(dx) <= half_width;
        }
        case Shape::cross: {
            float half_l = 0.5f * p.size;
            float half_w = p.size / 6.0f;
            bool horiz = std::fabs(dx) <= half_l && std::fabs(dy) <= half_w;
            bool vert = std::fabs(dy) <= half_l && std::fabs(dx) <= half_w;
            return horiz || vert;
        }
        case Shape::ring: {
            float r2 = dx * dx + dy * dy;
            float outer = p.size * p.size;
            float inner = 0.55f * 0.55f * outer;
            return r2 <= outer && r2 >= inner;
        }
        case Shape::diamond: return std::fabs(dx) + std::fabs(dy) <= p.size;
        case Shape::hbar: return std::fabs(dx) <= 0.5f * p.size && std::fabs(dy) <= 0.2f * p.size;
        case Shape::vbar: return std::fabs(dy) <= 0.5f * p.size && std::fabs(dx) <= 0.2f * p.size;
    }
    return false;
}

}  // namespace

Shape shape_from_name(const std::string& name) {
    for (int i = 0; i < 8; ++i)
        if (name == kShapeNames[i]) return static_cast<Shape>(i);
    throw std::invalid_argument("unknown shape: " + name);
}

std::string shape_name(Shape s) { return kShapeNames[static_cast<int>(s)]; }

std::array<float, 3> default_class_color(int class_label) {
    static const std::array<float, 3> colors[] = {
        {0.90f, 0.10f, 0.90f},  // magenta
        {0.10f, 0.90f, 0.90f},  // cyan
        {0.95f, 0.55f, 0.05f},  // orange
        {0.55f, 0.10f, 0.95f},  // violet
        {0.10f, 0.95f, 0.55f},  // spring green
        {0.95f, 0.10f, 0.45f},  // rose
        {0.70f, 0.95f, 0.10f},  // chartreuse
        {0.30f, 0.55f, 0.95f},  // sky
    };
    if (class_label < 0) throw std::invalid_argument("class label out of range");
    return colors[class_label % 8];
}

RenderConfig RenderConfig::defaults(int num_classes) {
    if (num_classes < 1 || num_classes > 8)
        throw std::invalid_argument("default render config supports 1..8 classes");
    RenderConfig cfg;
    for (int c = 0; c < num_classes; ++c) {
        cfg.shapes.push_back(static_cast<Shape>(c % 8));
        cfg.class_colors.push_back(default_class_color(c));
    }
    return cfg;
}

void RenderConfig::validate() const {
    if (height < 16 || width < 16) throw std::invalid_argument("render config: images must be at least 16x16");
    if (shapes.empty()) throw std::invalid_argument("render config: no classes");
    if (shapes.size() != class_colors.size())
        throw std::invalid_argument("render config: shapes and class_colors must align");
}

RenderedExample render_example_with_mask(const RenderConfig& cfg, int class_label, int bg_group,
                                         std::uint64_t jitter_seed) {
    cfg.validate();
    if (class_label < 0 || class_label >= cfg.num_classes())
        throw std::invalid_argument("render: class label " + std::to_string(class_label) +
                                    " out of range");
    if (bg_group < 0 || bg_group >= cfg.palette.size())
        throw std::invalid_argument("render: background group " + std::to_string(bg_group) +
                                    " out of range (\"others\" is not renderable)");

    Rng rng(jitter_seed);
    const Shape shape = cfg.shapes[static_cast<std::size_t>(class_label)];
    const auto fg = cfg.class_colors[static_cast<std::size_t>(class_label)];
    const auto& bg = cfg.palette.group(bg_group);
    const float hw = static_cast<float>(cfg.height) * static_cast<float>(cfg.width);

    // Shape geometry first, so the mask depends only on (class, seed).
    auto fr = frac_range(shape);
    float frac = static_cast<float>(rng.uniform(fr.lo, fr.hi));
    ShapeParams params;
    params.shape = shape;
    params.size = size_from_frac(shape, frac, hw);
    float mx = center_margin(shape, params.size);
    float cx_lo = mx, cx_hi = static_cast<float>(cfg.width) - mx;
    float cy_lo = mx, cy_hi = static_cast<float>(cfg.height) - mx;
    if (cx_hi < cx_lo) cx_hi = cx_lo = 0.5f * cfg.width;
    if (cy_hi < cy_lo) cy_hi = cy_lo = 0.5f * cfg.height;
    params.cx = static_cast<float>(rng.uniform(cx_lo, cx_hi));
    params.cy = static_cast<float>(rng.uniform(cy_lo, cy_hi));

    RenderedExample out;
    out.image = Image(cfg.height, cfg.width);
    out.foreground.assign(static_cast<std::size_t>(cfg.height) * cfg.width, 0);

    for (int y = 0; y < cfg.height; ++y) {
        for (int x = 0; x < cfg.width; ++x) {
            bool in_fg = inside(params, static_cast<float>(x) + 0.5f, static_cast<float>(y) + 0.5f);
            if (in_fg) {
                out.foreground[static_cast<std::size_t>(y) * cfg.width + x] = 1;
                for (int c = 0; c < 3; ++c) out.image.at(y, x, c) = fg[static_cast<std::size_t>(c)];
            } else {
                for (int c = 0; c < 3; ++c) {
                    float j = static_cast<float>(rng.uniform(-bg.jitter, bg.jitter));
                    out.image.at(y, x, c) =
                        std::clamp(bg.rgb[static_cast<std::size_t>(c)] + j, 0.0f, 1.0f);
                }
            }
        }
    }
    // Snap to the 8-bit storage grid so in-memory generation is bit-identical
    // to a save/load round trip of the same dataset.
    for (auto& v : out.image.pix)
        v = static_cast<float>(std::lround(v * 255.0f)) / 255.0f;
    return out;
}

Image render_example(const RenderConfig& cfg, int class_label, int bg_group,
                     std::uint64_t jitter_seed) {
    return render_example_with_mask(cfg, class_label, bg_group, jitter_seed).image;
}

}  // namespace flowlab::synth
