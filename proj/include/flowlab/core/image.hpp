#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "flowlab/core/tensor.hpp"

namespace flowlab {

/// H x W x 3 image. In memory pixels are unit-interval floats in interleaved
/// row-major (HWC) order, matching the on-disk byte layout; on disk each
/// value is one byte in {0..255}.
struct Image {
    int h = 0;
    int w = 0;
    std::vector<float> pix;  // h*w*3, [0,1]

    Image() = default;
    Image(int height, int width) : h(height), w(width), pix(static_cast<std::size_t>(height) * width * 3, 0.0f) {}

    std::size_t size() const { return pix.size(); }

    float& at(int y, int x, int c) { return pix[(static_cast<std::size_t>(y) * w + x) * 3 + c]; }
    float at(int y, int x, int c) const { return pix[(static_cast<std::size_t>(y) * w + x) * 3 + c]; }

    bool same_shape(const Image& o) const { return h == o.h && w == o.w; }
};

inline std::uint8_t to_byte(float v) {
    float s = std::clamp(v, 0.0f, 1.0f) * 255.0f;
    return static_cast<std::uint8_t>(std::lround(s));
}

inline float from_byte(std::uint8_t b) { return static_cast<float>(b) / 255.0f; }

inline std::vector<std::uint8_t> image_to_bytes(const Image& im) {
    std::vector<std::uint8_t> out(im.size());
    for (std::size_t i = 0; i < im.size(); ++i) out[i] = to_byte(im.pix[i]);
    return out;
}

inline Image image_from_bytes(int h, int w, const std::uint8_t* bytes) {
    Image im(h, w);
    for (std::size_t i = 0; i < im.size(); ++i) im.pix[i] = from_byte(bytes[i]);
    return im;
}

/// HWC image -> CHW tensor (what the conv stacks consume).
template <class T>
Tensor<T> image_to_chw(const Image& im) {
    Tensor<T> t({3, im.h, im.w});
    for (int y = 0; y < im.h; ++y)
        for (int x = 0; x < im.w; ++x)
            for (int c = 0; c < 3; ++c) t.at3(c, y, x) = static_cast<T>(im.at(y, x, c));
    return t;
}

template <class T>
Image chw_to_image(const Tensor<T>& t) {
    if (t.shape().size() != 3 || t.extent(0) != 3)
        throw std::invalid_argument("chw_to_image: expected [3,H,W], got " + t.shape_str());
    Image im(t.extent(1), t.extent(2));
    for (int y = 0; y < im.h; ++y)
        for (int x = 0; x < im.w; ++x)
            for (int c = 0; c < 3; ++c) im.at(y, x, c) = static_cast<float>(t.at3(c, y, x));
    return im;
}

}  // namespace flowlab
