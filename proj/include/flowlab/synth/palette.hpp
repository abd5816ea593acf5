#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace flowlab::synth {

/// One named background color group. Background pixels are drawn from the
/// box [rgb - jitter, rgb + jitter] per channel. hue_tol < 0 marks an
/// achromatic group (white/black/gray) with no meaningful hue interval.
struct ColorGroup {
    std::string name;
    std::array<float, 3> rgb{0, 0, 0};
    float jitter = 0.06f;
    float hue_center = 0.0f;  // degrees
    float hue_tol = -1.0f;    // degrees; < 0 = achromatic
};

/// Named color groups with dense indices 0..size()-1 and a mandatory
/// trailing "others" category at index others_index(). "others" never
/// occurs in rendered data but is a legal annotation value.
class Palette {
public:
    Palette() = default;
    explicit Palette(std::vector<ColorGroup> groups);

    static Palette default_palette();

    int size() const { return static_cast<int>(groups_.size()); }  // excludes "others"
    int others_index() const { return size(); }
    int index_count() const { return size() + 1; }  // includes "others"

    const ColorGroup& group(int index) const;
    const std::vector<ColorGroup>& groups() const { return groups_; }

    /// Name for any valid index, including "others".
    std::string name(int index) const;
    /// Index for a group name; "others" maps to others_index(). Empty if unknown.
    std::optional<int> find(const std::string& name) const;

private:
    std::vector<ColorGroup> groups_;
};

/// Hue in degrees [0, 360). Achromatic input (max == min) returns 0.
float rgb_to_hue(float r, float g, float b);

/// Circular distance between two hue angles, in [0, 180].
float hue_distance(float a, float b);

}  // namespace flowlab::synth
