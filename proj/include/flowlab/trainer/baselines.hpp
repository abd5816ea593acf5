#pragma once

#include <array>
#include <vector>

#include "flowlab/core/image.hpp"
#include "flowlab/core/rng.hpp"

namespace flowlab::trainer {

/// Probability vector over classes, all mass on `label`.
std::vector<float> one_hot(int num_classes, int label);

/// Every low-level augmentation below exposes a deterministic core taking
/// explicit placement/weights (exact unit-testable arithmetic) plus a
/// stochastic wrapper that draws those values from the rng.

/// lam*x1 + (1-lam)*x2 on pixels, and the same convex combination on the
/// targets. Shapes must match.
void mix_examples(const Image& x1, const std::vector<float>& y1, const Image& x2,
                  const std::vector<float>& y2, double lam, Image& x_out,
                  std::vector<float>& y_out);

/// One lam ~ Beta(alpha, alpha) per call, applied to every pair (the
/// whole-batch weight of the original recipe).
void mixup_batch(const std::vector<Image>& x1, const std::vector<std::vector<float>>& y1,
                 const std::vector<Image>& x2, const std::vector<std::vector<float>>& y2,
                 double alpha, Rng& rng, std::vector<Image>& x_out,
                 std::vector<std::vector<float>>& y_out);

/// The square [y0, y0+size) x [x0, x0+size), clipped to the image, set to
/// fill. The box may start at negative coordinates (clipping handles it).
Image cutout_at(const Image& x, int y0, int x0, int size, const std::array<float, 3>& fill);

/// Square of side `size` centered at a uniformly drawn pixel (so borders
/// clip), filled with `fill`. The label is untouched by contract. size = 0
/// returns the input unchanged.
Image cutout(const Image& x, int size, const std::array<float, 3>& fill, Rng& rng);

/// Replace the clipped box [y0,y0+h) x [x0,x0+w) of x1 with the co-located
/// pixels of x2; the target gets weight lam = 1 - clipped_area / image_area
/// on y1. Returns the exact lam used.
double cutmix_apply(const Image& x1, const std::vector<float>& y1, const Image& x2,
                    const std::vector<float>& y2, int y0, int x0, int h, int w, Image& x_out,
                    std::vector<float>& y_out);

/// One lam ~ Beta(alpha, alpha) per call; box side ratio sqrt(1 - lam),
/// centered at a uniform pixel and clipped, with the target weight recomputed
/// from the surviving area (the original recipe).
void cutmix_batch(const std::vector<Image>& x1, const std::vector<std::vector<float>>& y1,
                  const std::vector<Image>& x2, const std::vector<std::vector<float>>& y2,
                  double alpha, Rng& rng, std::vector<Image>& x_out,
                  std::vector<std::vector<float>>& y_out);

}  // namespace flowlab::trainer
