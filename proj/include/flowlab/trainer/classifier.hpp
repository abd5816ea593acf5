#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowlab/core/image.hpp"
#include "flowlab/core/rng.hpp"
#include "flowlab/core/tensor.hpp"
#include "flowlab/nn/layers.hpp"

namespace flowlab::trainer {

/// Geometry of the small convolutional classifier. The default (base = 32 on
/// 32x32 inputs) lands at ~103k parameters: four conv blocks, global average
/// pooling, and a linear head.
struct ClassifierArch {
    int num_classes = 4;
    int base = 32;  // channel width of the first block; later blocks use 2x, 4x
    int height = 32;
    int width = 32;

    void validate() const {
        if (num_classes < 2) throw std::invalid_argument("classifier arch: need >= 2 classes");
        if (base < 1) throw std::invalid_argument("classifier arch: base width must be >= 1");
        if (height < 8 || width < 8)
            throw std::invalid_argument("classifier arch: inputs must be at least 8x8");
    }

    bool operator==(const ClassifierArch&) const = default;
};

nlohmann::json classifier_arch_to_json(const ClassifierArch& a);
ClassifierArch classifier_arch_from_json(const nlohmann::json& j);

/// Numerically careful cross-entropy against a soft target on the C-simplex:
/// loss = sum_i t_i * log(sum_j exp(l_j - l_i)), each inner sum evaluated via
/// log1p so a dominant correct logit yields the true tiny loss instead of a
/// cancellation-rounded zero. Accumulation runs in double regardless of T.
template <class T>
T cross_entropy(const Tensor<T>& logits, const std::vector<T>& target) {
    const std::size_t c = logits.size();
    if (c != target.size() || c == 0)
        throw std::invalid_argument("cross_entropy: logits/target length mismatch");
    double loss = 0.0;
    for (std::size_t i = 0; i < c; ++i) {
        const double ti = static_cast<double>(target[i]);
        if (ti == 0.0) continue;
        double rest = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            if (j == i) continue;
            rest += std::exp(static_cast<double>(logits[j]) - static_cast<double>(logits[i]));
        }
        loss += ti * std::log1p(rest);
    }
    return static_cast<T>(loss);
}

/// d loss / d logits = softmax(logits) - target.
template <class T>
Tensor<T> cross_entropy_grad(const Tensor<T>& logits, const std::vector<T>& target) {
    const std::size_t c = logits.size();
    if (c != target.size() || c == 0)
        throw std::invalid_argument("cross_entropy: logits/target length mismatch");
    double mx = static_cast<double>(logits[0]);
    for (std::size_t i = 1; i < c; ++i) mx = std::max(mx, static_cast<double>(logits[i]));
    double denom = 0.0;
    for (std::size_t i = 0; i < c; ++i) denom += std::exp(static_cast<double>(logits[i]) - mx);
    Tensor<T> g({static_cast<int>(c)});
    for (std::size_t i = 0; i < c; ++i) {
        const double p = std::exp(static_cast<double>(logits[i]) - mx) / denom;
        g[i] = static_cast<T>(p - static_cast<double>(target[i]));
    }
    return g;
}

/// Four stride-laddered conv blocks, global average pooling, linear head.
/// Templated on the scalar type so gradient checks can run in double.
template <class T>
class ClassifierT {
public:
    explicit ClassifierT(const ClassifierArch& arch) : arch_(arch) {
        arch.validate();
        c1_ = nn::Conv2d<T>("cls1", 3, arch.base, 3, 1, 1);
        c2_ = nn::Conv2d<T>("cls2", arch.base, arch.base, 3, 2, 1);
        c3_ = nn::Conv2d<T>("cls3", arch.base, 2 * arch.base, 3, 2, 1);
        c4_ = nn::Conv2d<T>("cls4", 2 * arch.base, 4 * arch.base, 3, 2, 1);
        head_ = nn::Dense<T>("head", 4 * arch.base, arch.num_classes);
    }

    ClassifierT(const ClassifierT&) = delete;
    ClassifierT& operator=(const ClassifierT&) = delete;

    const ClassifierArch& arch() const { return arch_; }

    nn::ParamRefs<T> params() {
        nn::ParamRefs<T> out;
        c1_.collect(out);
        c2_.collect(out);
        c3_.collect(out);
        c4_.collect(out);
        head_.collect(out);
        return out;
    }

    void init(Rng& rng) {
        c1_.init_he(rng);
        c2_.init_he(rng);
        c3_.init_he(rng);
        c4_.init_he(rng);
        head_.init_he(rng);
    }

    /// Logits for one [3,H,W] input. Caches activations for backward().
    Tensor<T> logits(const Tensor<T>& x) {
        if (x.shape().size() != 3 || x.extent(0) != 3 || x.extent(1) != arch_.height ||
            x.extent(2) != arch_.width)
            throw std::invalid_argument("classifier: input shape " + x.shape_str());
        Tensor<T> h = r1_.forward(c1_.forward(x));
        h = r2_.forward(c2_.forward(h));
        h = r3_.forward(c3_.forward(h));
        h = r4_.forward(c4_.forward(h));
        return head_.forward(gap_.forward(h));
    }

    /// Accumulates parameter gradients for the most recent logits() call.
    void backward(const Tensor<T>& glogits) {
        Tensor<T> g = gap_.backward(head_.backward(glogits));
        g = c4_.backward(r4_.backward(g));
        g = c3_.backward(r3_.backward(g));
        g = c2_.backward(r2_.backward(g));
        c1_.backward(r1_.backward(g));
    }

    Tensor<T> logits_for_image(const Image& im) { return logits(image_to_chw<T>(im)); }

    /// Deterministic argmax prediction (lowest index wins ties).
    int predict(const Image& im) {
        const Tensor<T> l = logits_for_image(im);
        std::size_t best = 0;
        for (std::size_t i = 1; i < l.size(); ++i)
            if (l[i] > l[best]) best = i;
        return static_cast<int>(best);
    }

private:
    ClassifierArch arch_;
    nn::Conv2d<T> c1_, c2_, c3_, c4_;
    nn::Relu<T> r1_, r2_, r3_, r4_;
    nn::GlobalAvgPool<T> gap_;
    nn::Dense<T> head_;
};

using Classifier = ClassifierT<float>;

extern template class ClassifierT<float>;
extern template class ClassifierT<double>;

/// Serialize all parameters plus the architecture (and an optional training
/// echo) into the shared checkpoint container, kind "classifier".
void save_classifier(const std::string& path, Classifier& model,
                     const nlohmann::json& train_echo = {});

/// Rebuild a classifier from a checkpoint; the architecture is validated
/// before any parameter data is read. When train_echo is non-null it
/// receives the stored training block.
std::unique_ptr<Classifier> load_classifier(const std::string& path,
                                            nlohmann::json* train_echo = nullptr);

}  // namespace flowlab::trainer
