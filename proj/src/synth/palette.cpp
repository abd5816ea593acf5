#include "flowlab/synth/palette.hpp"

#include <algorithm>
#include <stdexcept>

namespace flowlab::synth {

Palette::Palette(std::vector<ColorGroup> groups) : groups_(std::move(groups)) {
    if (groups_.size() < 2) throw std::invalid_argument("palette: need at least 2 color groups");
    for (const auto& g : groups_) {
        if (g.name == "others") throw std::invalid_argument("palette: \"others\" is implicit");
        if (g.name.empty()) throw std::invalid_argument("palette: empty group name");
    }
    for (std::size_t i = 0; i < groups_.size(); ++i)
        for (std::size_t j = i + 1; j < groups_.size(); ++j)
            if (groups_[i].name == groups_[j].name)
                throw std::invalid_argument("palette: duplicate group name " + groups_[i].name);
}

Palette Palette::default_palette() {
    return Palette({
        {"blue", {0.15f, 0.25f, 0.85f}, 0.06f, 231.0f, 35.0f},
        {"green", {0.15f, 0.75f, 0.20f}, 0.06f, 125.0f, 35.0f},
        {"red", {0.85f, 0.12f, 0.12f}, 0.06f, 0.0f, 25.0f},
        {"yellow", {0.90f, 0.85f, 0.15f}, 0.06f, 56.0f, 25.0f},
        {"white", {0.93f, 0.93f, 0.93f}, 0.05f, 0.0f, -1.0f},
        {"black", {0.07f, 0.07f, 0.07f}, 0.05f, 0.0f, -1.0f},
        {"gray", {0.50f, 0.50f, 0.50f}, 0.05f, 0.0f, -1.0f},
        {"brown", {0.55f, 0.35f, 0.15f}, 0.06f, 30.0f, 25.0f},
    });
}

const ColorGroup& Palette::group(int index) const {
    if (index < 0 || index >= size())
        throw std::invalid_argument("palette: group index " + std::to_string(index) +
                                    " out of range (\"others\" has no color region)");
    return groups_[static_cast<std::size_t>(index)];
}

std::string Palette::name(int index) const {
    if (index == others_index()) return "others";
    return group(index).name;
}

std::optional<int> Palette::find(const std::string& name) const {
    if (name == "others") return others_index();
    for (std::size_t i = 0; i < groups_.size(); ++i)
        if (groups_[i].name == name) return static_cast<int>(i);
    return std::nullopt;
}

float rgb_to_hue(float r, float g, float b) {
    float mx = std::max({r, g, b});
    float mn = std::min({r, g, b});
    float d = mx - mn;
    if (d <= 0.0f) return 0.0f;
    float h;
    if (mx == r) {
        h = (g - b) / d;
        if (h < 0) h += 6.0f;
    } else if (mx == g) {
        h = (b - r) / d + 2.0f;
    } else {
        h = (r - g) / d + 4.0f;
    }
    return h * 60.0f;
}

float hue_distance(float a, float b) {
    float d = std::fabs(std::fmod(a - b, 360.0f));
    if (d > 180.0f) d = 360.0f - d;
    return d;
}

}  // namespace flowlab::synth
