#include "flowlab/trainer/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace flowlab::trainer {

namespace {

void check_pair(const Image& x1, const Image& x2, const std::vector<float>& y1,
                const std::vector<float>& y2, const char* what) {
    if (!x1.same_shape(x2))
        throw std::invalid_argument(std::string(what) + ": image shapes differ");
    if (y1.size() != y2.size() || y1.empty())
        throw std::invalid_argument(std::string(what) + ": target lengths differ");
}

void check_batches(const std::vector<Image>& x1, const std::vector<std::vector<float>>& y1,
                   const std::vector<Image>& x2, const std::vector<std::vector<float>>& y2,
                   const char* what) {
    if (x1.size() != y1.size() || x2.size() != y2.size() || x1.size() != x2.size())
        throw std::invalid_argument(std::string(what) + ": batch sizes differ");
}

void blend_targets(const std::vector<float>& y1, const std::vector<float>& y2, double lam,
                   std::vector<float>& out) {
    out.resize(y1.size());
    for (std::size_t i = 0; i < y1.size(); ++i)
        out[i] = static_cast<float>(lam * y1[i] + (1.0 - lam) * y2[i]);
}

}  // namespace

std::vector<float> one_hot(int num_classes, int label) {
    if (label < 0 || label >= num_classes) throw std::invalid_argument("one_hot: label out of range");
    std::vector<float> y(static_cast<std::size_t>(num_classes), 0.0f);
    y[static_cast<std::size_t>(label)] = 1.0f;
    return y;
}

void mix_examples(const Image& x1, const std::vector<float>& y1, const Image& x2,
                  const std::vector<float>& y2, double lam, Image& x_out,
                  std::vector<float>& y_out) {
    check_pair(x1, x2, y1, y2, "mixup");
    x_out = Image(x1.h, x1.w);
    const float l = static_cast<float>(lam);
    for (std::size_t i = 0; i < x1.size(); ++i)
        x_out.pix[i] = l * x1.pix[i] + (1.0f - l) * x2.pix[i];
    blend_targets(y1, y2, lam, y_out);
}

void mixup_batch(const std::vector<Image>& x1, const std::vector<std::vector<float>>& y1,
                 const std::vector<Image>& x2, const std::vector<std::vector<float>>& y2,
                 double alpha, Rng& rng, std::vector<Image>& x_out,
                 std::vector<std::vector<float>>& y_out) {
    check_batches(x1, y1, x2, y2, "mixup");
    const double lam = rng.beta(alpha, alpha);
    x_out.resize(x1.size());
    y_out.resize(x1.size());
    for (std::size_t i = 0; i < x1.size(); ++i)
        mix_examples(x1[i], y1[i], x2[i], y2[i], lam, x_out[i], y_out[i]);
}

Image cutout_at(const Image& x, int y0, int x0, int size, const std::array<float, 3>& fill) {
    if (size < 0) throw std::invalid_argument("cutout: size must be >= 0");
    Image out = x;
    const int ya = std::max(0, y0), yb = std::min(x.h, y0 + size);
    const int xa = std::max(0, x0), xb = std::min(x.w, x0 + size);
    for (int y = ya; y < yb; ++y)
        for (int xx = xa; xx < xb; ++xx)
            for (int c = 0; c < 3; ++c) out.at(y, xx, c) = fill[static_cast<std::size_t>(c)];
    return out;
}

Image cutout(const Image& x, int size, const std::array<float, 3>& fill, Rng& rng) {
    if (size < 0) throw std::invalid_argument("cutout: size must be >= 0");
    if (size == 0) return x;
    const int cy = static_cast<int>(rng.below(static_cast<std::uint64_t>(x.h)));
    const int cx = static_cast<int>(rng.below(static_cast<std::uint64_t>(x.w)));
    return cutout_at(x, cy - size / 2, cx - size / 2, size, fill);
}

double cutmix_apply(const Image& x1, const std::vector<float>& y1, const Image& x2,
                    const std::vector<float>& y2, int y0, int x0, int h, int w, Image& x_out,
                    std::vector<float>& y_out) {
    check_pair(x1, x2, y1, y2, "cutmix");
    if (h < 0 || w < 0) throw std::invalid_argument("cutmix: box extents must be >= 0");
    const int ya = std::clamp(y0, 0, x1.h), yb = std::clamp(y0 + h, 0, x1.h);
    const int xa = std::clamp(x0, 0, x1.w), xb = std::clamp(x0 + w, 0, x1.w);
    const long area = static_cast<long>(std::max(0, yb - ya)) * std::max(0, xb - xa);
    const double lam = 1.0 - static_cast<double>(area) / (static_cast<double>(x1.h) * x1.w);

    x_out = x1;
    for (int y = ya; y < yb; ++y)
        for (int xx = xa; xx < xb; ++xx)
            for (int c = 0; c < 3; ++c) x_out.at(y, xx, c) = x2.at(y, xx, c);
    blend_targets(y1, y2, lam, y_out);
    return lam;
}

void cutmix_batch(const std::vector<Image>& x1, const std::vector<std::vector<float>>& y1,
                  const std::vector<Image>& x2, const std::vector<std::vector<float>>& y2,
                  double alpha, Rng& rng, std::vector<Image>& x_out,
                  std::vector<std::vector<float>>& y_out) {
    check_batches(x1, y1, x2, y2, "cutmix");
    x_out.resize(x1.size());
    y_out.resize(x1.size());
    if (x1.empty()) return;

    const double lam = rng.beta(alpha, alpha);
    const double ratio = std::sqrt(1.0 - lam);
    const int hh = x1[0].h, ww = x1[0].w;
    const int bh = static_cast<int>(std::lround(hh * ratio));
    const int bw = static_cast<int>(std::lround(ww * ratio));
    const int cy = static_cast<int>(rng.below(static_cast<std::uint64_t>(hh)));
    const int cx = static_cast<int>(rng.below(static_cast<std::uint64_t>(ww)));
    for (std::size_t i = 0; i < x1.size(); ++i)
        cutmix_apply(x1[i], y1[i], x2[i], y2[i], cy - bh / 2, cx - bw / 2, bh, bw, x_out[i],
                     y_out[i]);
}

}  // namespace flowlab::trainer
