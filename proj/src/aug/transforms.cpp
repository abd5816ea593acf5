#include "flowlab/aug/transforms.hpp"

#include <algorithm>
#include <stdexcept>

namespace flowlab::aug {

Target target_from_name(const std::string& name) {
    if (name == "z") return Target::global_z;
    if (name == "nu") return Target::local_nu;
    throw std::invalid_argument("augment: unknown target \"" + name + "\" (want z or nu)");
}

std::string target_name(Target t) { return t == Target::global_z ? "z" : "nu"; }

void PerturbSpec::validate() const {
    if (dist == Dist::trunc_gaussian) {
        if (sigma <= 0.0) throw std::invalid_argument("augment: sigma must be > 0");
        if (bound <= 0.0) throw std::invalid_argument("augment: bound must be > 0");
    } else {
        if (!(lo < hi)) throw std::invalid_argument("augment: uniform range needs lo < hi");
        if (clamp_result)
            throw std::invalid_argument(
                "augment: the result clamp is defined by the truncation bound and "
                "requires the truncated-Gaussian distribution");
    }
}

nlohmann::json PerturbSpec::to_json() const {
    nlohmann::json j;
    if (dist == Dist::trunc_gaussian) {
        j["distribution"] = "trunc_gaussian";
        j["mu"] = mu;
        j["sigma"] = sigma;
        j["bound"] = bound;
        j["clamp_result"] = clamp_result;
    } else {
        j["distribution"] = "uniform";
        j["lo"] = lo;
        j["hi"] = hi;
    }
    j["target"] = target_name(target);
    return j;
}

PerturbSpec PerturbSpec::from_json(const nlohmann::json& j) {
    PerturbSpec s;
    const std::string dist = j.value("distribution", "trunc_gaussian");
    if (dist == "trunc_gaussian")
        s.dist = Dist::trunc_gaussian;
    else if (dist == "uniform")
        s.dist = Dist::uniform;
    else
        throw std::invalid_argument("augment: unknown distribution \"" + dist + "\"");
    s.mu = j.value("mu", s.mu);
    s.sigma = j.value("sigma", s.sigma);
    s.bound = j.value("bound", s.bound);
    s.lo = j.value("lo", s.lo);
    s.hi = j.value("hi", s.hi);
    s.clamp_result = j.value("clamp_result", s.clamp_result);
    if (j.contains("target")) s.target = target_from_name(j.at("target").get<std::string>());
    s.validate();
    return s;
}

void MixSpec::validate() const {
    if (alpha <= 0.0) throw std::invalid_argument("augment: alpha must be > 0");
    if (tr < 0.0 || tr > 1.0) throw std::invalid_argument("augment: tr must be in [0, 1]");
}

nlohmann::json MixSpec::to_json() const {
    return {{"alpha", alpha}, {"tr", tr}, {"target", target_name(target)}};
}

MixSpec MixSpec::from_json(const nlohmann::json& j) {
    MixSpec s;
    s.alpha = j.value("alpha", s.alpha);
    s.tr = j.value("tr", s.tr);
    if (j.contains("target")) s.target = target_from_name(j.at("target").get<std::string>());
    s.validate();
    return s;
}

void AugmentationSpec::validate() const {
    if (k_per_source < 1) throw std::invalid_argument("augment: K must be >= 1");
    if (count < 1) throw std::invalid_argument("augment: L must be >= 1");
    if (method == Method::gaussian)
        perturb.validate();
    else
        mix.validate();
}

nlohmann::json AugmentationSpec::to_json() const {
    nlohmann::json j;
    j["method"] = method == Method::gaussian ? "gaussian" : "mix";
    j[method == Method::gaussian ? "perturb" : "mix"] =
        method == Method::gaussian ? perturb.to_json() : mix.to_json();
    j["k_per_source"] = k_per_source;
    j["count"] = count;
    j["seed"] = seed;
    return j;
}

Tensor<float> perturb_code(const Tensor<float>& code, const PerturbSpec& spec, Rng& rng) {
    spec.validate();
    Tensor<float> out(code.shape());
    if (spec.dist == PerturbSpec::Dist::trunc_gaussian) {
        const std::vector<double> eps =
            sample_trunc_gaussian(spec.mu, spec.sigma, spec.bound, code.size(), rng);
        for (std::size_t i = 0; i < code.size(); ++i)
            out[i] = code[i] + static_cast<float>(eps[i]);
        if (spec.clamp_result) {
            const float b = static_cast<float>(spec.bound);
            for (auto& v : out.span()) v = std::clamp(v, -b, b);
        }
    } else {
        for (std::size_t i = 0; i < code.size(); ++i)
            out[i] = code[i] + static_cast<float>(rng.uniform(spec.lo, spec.hi));
    }
    return out;
}

Image augment_gaussian(flow::FlowModel& model, const Image& x, const PerturbSpec& spec,
                       Rng& rng) {
    Tensor<float> t = image_to_chw<float>(x);
    auto [z, nu] = model.encode(t, flow::EncodeMode::mean);
    if (spec.target == Target::global_z) {
        Tensor<float> z2 = perturb_code(z, spec, rng);
        return chw_to_image(model.decode(z2, nu));
    }
    Tensor<float> nu2 = perturb_code(nu, spec, rng);
    return chw_to_image(model.decode(z, nu2));
}

Image mix_images(flow::FlowModel& model, const Image& x1, const Image& x2, double m,
                 Target target) {
    if (!x1.same_shape(x2)) throw std::invalid_argument("augment: mix inputs differ in shape");
    auto [z1, nu1] = model.encode(image_to_chw<float>(x1), flow::EncodeMode::mean);
    auto [z2, nu2] = model.encode(image_to_chw<float>(x2), flow::EncodeMode::mean);
    const float w = static_cast<float>(m);
    if (target == Target::global_z) {
        Tensor<float> z(z1.shape());
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = w * z1[i] + (1.0f - w) * z2[i];
        return chw_to_image(model.decode(z, nu1));
    }
    Tensor<float> nu(nu1.shape());
    for (std::size_t i = 0; i < nu.size(); ++i) nu[i] = w * nu1[i] + (1.0f - w) * nu2[i];
    return chw_to_image(model.decode(z1, nu));
}

Image augment_mix(flow::FlowModel& model, const Image& x1, const Image& x2, const MixSpec& spec,
                  Rng& rng) {
    spec.validate();
    const double m = flip_weight(rng.beta(spec.alpha, spec.alpha), spec.tr);
    return mix_images(model, x1, x2, m, spec.target);
}

Image switch_codes(flow::FlowModel& model, const Image& x1, const Image& x2) {
    if (!x1.same_shape(x2)) throw std::invalid_argument("augment: switch inputs differ in shape");
    auto [z1, nu1] = model.encode(image_to_chw<float>(x1), flow::EncodeMode::mean);
    auto [z2, nu2] = model.encode(image_to_chw<float>(x2), flow::EncodeMode::mean);
    (void)z1;
    (void)nu2;
    return chw_to_image(model.decode(z2, nu1));
}

std::vector<LabeledImage> augment_batch(flow::FlowModel& model,
                                        const std::vector<synth::LabeledExample>& source,
                                        const AugmentationSpec& spec) {
    spec.validate();
    if (source.empty()) throw std::invalid_argument("augment: empty source dataset");

    std::vector<LabeledImage> out;
    out.reserve(spec.count);
    for (std::size_t l = 0; l < spec.count; ++l) {
        Rng rng(derive_seed(spec.seed, "augment", l));
        const std::size_t i = static_cast<std::size_t>(rng.below(source.size()));
        LabeledImage item;
        item.class_label = source[i].class_label;
        if (spec.method == AugmentationSpec::Method::gaussian) {
            item.image = augment_gaussian(model, source[i].image, spec.perturb, rng);
        } else {
            const std::size_t j = static_cast<std::size_t>(rng.below(source.size()));
            item.image = augment_mix(model, source[i].image, source[j].image, spec.mix, rng);
        }
        out.push_back(std::move(item));
    }
    return out;
}

}  // namespace flowlab::aug
