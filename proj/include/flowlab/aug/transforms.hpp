#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "flowlab/core/image.hpp"
#include "flowlab/core/rng.hpp"
#include "flowlab/flow/model.hpp"
#include "flowlab/synth/dataset.hpp"

namespace flowlab::aug {

/// Which code the perturbation/interpolation acts on: the global vector z
/// or the image-shaped local code nu. Targeting nu is the ablation arm.
enum class Target { global_z, local_nu };

Target target_from_name(const std::string& name);  // "z" | "nu"
std::string target_name(Target t);

struct PerturbSpec {
    enum class Dist { trunc_gaussian, uniform };
    Dist dist = Dist::trunc_gaussian;
    double mu = 0.0;
    double sigma = 0.1;
    double bound = 4.0;  // truncation interval [-bound, bound] for the draw
    double lo = -0.2;
    double hi = 0.2;  // uniform ablation range
    Target target = Target::global_z;
    /// Additionally clamp (code + eps) itself to [-bound, bound]. Off by
    /// default: the magnitude bound is read as a bound on the perturbation.
    bool clamp_result = false;

    void validate() const;
    nlohmann::json to_json() const;
    static PerturbSpec from_json(const nlohmann::json& j);
};

struct MixSpec {
    double alpha = 1.0;  // Beta(alpha, alpha) concentration
    double tr = 0.5;     // flip threshold
    Target target = Target::global_z;

    void validate() const;
    nlohmann::json to_json() const;
    static MixSpec from_json(const nlohmann::json& j);
};

struct AugmentationSpec {
    enum class Method { gaussian, mix };
    Method method = Method::gaussian;
    PerturbSpec perturb;       // used when method == gaussian
    MixSpec mix;               // used when method == mix
    int k_per_source = 1;      // transforms per source image (K)
    std::size_t count = 1;     // total outputs for batch jobs (L)
    std::uint64_t seed = 1;

    void validate() const;
    nlohmann::json to_json() const;
};

/// n i.i.d. draws from N(mu, sigma^2) conditioned on the value lying in
/// [-b, b], by rejection. Throws std::invalid_argument when the interval
/// holds less than 1e-6 of the Gaussian mass (the loop would effectively
/// never accept).
std::vector<double> sample_trunc_gaussian(double mu, double sigma, double b, std::size_t n,
                                          Rng& rng);

/// The interpolation-weight flip: weights below the threshold are reflected
/// so the first (label-donor) image always dominates. flip_weight(0.3, 0.5)
/// = 0.7; values >= tr pass through.
double flip_weight(double m, double tr);

/// code + fresh elementwise noise per spec (and the optional result clamp).
Tensor<float> perturb_code(const Tensor<float>& code, const PerturbSpec& spec, Rng& rng);

/// Additive-noise transform: encode with the posterior mean, perturb the
/// chosen code, decode. Output has the input's shape, values in [0,1].
Image augment_gaussian(flow::FlowModel& model, const Image& x, const PerturbSpec& spec, Rng& rng);

/// Interpolation with an explicit (already flipped) weight m on the first
/// image's code; the other code is taken wholesale from the first image.
Image mix_images(flow::FlowModel& model, const Image& x1, const Image& x2, double m,
                 Target target);

/// Stochastic interpolation: m ~ Beta(alpha, alpha), flipped below tr.
Image augment_mix(flow::FlowModel& model, const Image& x1, const Image& x2, const MixSpec& spec,
                  Rng& rng);

/// decode(z of x2, nu of x1): the second image's global style carrying the
/// first image's local content.
Image switch_codes(flow::FlowModel& model, const Image& x1, const Image& x2);

struct LabeledImage {
    Image image;
    int class_label = 0;
};

/// L augmented examples drawn from uniformly sampled sources. Every output
/// uses an RNG stream derived from (seed, index), so results are identical
/// regardless of evaluation order, and carries its source's label unchanged.
std::vector<LabeledImage> augment_batch(flow::FlowModel& model,
                                        const std::vector<synth::LabeledExample>& source,
                                        const AugmentationSpec& spec);

}  // namespace flowlab::aug
