#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowlab/aug/transforms.hpp"
#include "flowlab/core/tensor.hpp"
#include "flowlab/flow/model.hpp"
#include "flowlab/synth/dataset.hpp"
#include "flowlab/trainer/classifier.hpp"

namespace flowlab::trainer {

/// The nine training recipes: plain ERM, the three pixel-space baselines,
/// the two flow objectives trained alone, their std-anchored and combined
/// forms, and the flow+cutmix composition.
enum class Method {
    standard,
    mixup,
    cutout,
    cutmix,
    flowaug_gauss,
    flowaug_mix,
    flowaug_plus_std,
    combine,
    flowaug_gauss_cutmix,
};

Method method_from_name(const std::string& name);
std::string method_name(Method m);

/// Does this method transform batches through a trained flow?
bool method_needs_flow(Method m);

/// Step decay: the rate is `initial` (read at the reference batch of 128 and
/// scaled linearly with the actual batch) multiplied by `factor` once per
/// decay epoch reached. Empty decay_epochs means the 50%/75% milestones are
/// derived from the epoch count.
struct LrSchedule {
    double initial = 0.1;
    std::vector<int> decay_epochs;  // 1-based epochs; strictly increasing
    double factor = 0.1;

    void validate() const;
    /// Milestones actually used for a run of `epochs` epochs.
    std::vector<int> resolved_milestones(int epochs) const;
    /// Learning rate during `epoch` (1-based) for the given batch size.
    double rate_at(int epoch, int epochs, int batch) const;

    nlohmann::json to_json() const;
};

struct TrainConfig {
    Method method = Method::standard;

    // Pixel-baseline knobs.
    double mix_alpha = 1.0;                       // Beta(alpha, alpha) for mixup / cutmix
    int cutout_size = 16;                         // square side, pixels
    std::array<float, 3> cutout_fill = {0, 0, 0};

    // Flow-objective weights: lambda anchors "+std" training; lambda1 and
    // lambda2 weight the second transform and the raw term of the combined
    // objective. plus_std_transform picks which transform family the "+std"
    // method pairs with the raw term.
    double lambda = 0.1;
    double lambda1 = 1.0;
    double lambda2 = 0.05;
    aug::AugmentationSpec::Method plus_std_transform = aug::AugmentationSpec::Method::gaussian;

    // Flow transforms (flowaug methods); `gauss` parameterizes the additive
    // perturbation draw, `mix` the code-interpolation draw.
    aug::PerturbSpec gauss;
    aug::MixSpec mix;
    int k_per_source = 1;     // fresh transforms of each image per epoch
    bool inline_aug = false;  // transform per step instead of per epoch
    std::string flow_checkpoint;  // required when method_needs_flow

    int epochs = 20;
    int batch = 128;
    LrSchedule lr;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::uint64_t seed = 1;

    void validate() const;
    nlohmann::json to_json() const;
};

TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochStats {
    int epoch = 0;       // 1-based
    double loss = 0;     // mean over optimizer steps
    double test_acc = 0;
    double lr = 0;
    double seconds = 0;
};

struct TrainResult {
    std::vector<EpochStats> epochs;
    double best_acc = 0;  // highest test accuracy seen
    int best_epoch = 0;
    double last_acc = 0;  // test accuracy after the final epoch
};

/// One example as the loss functions see it: already-transformed inputs in
/// [3,H,W] layout plus the target distribution. Unused slots stay empty.
template <class T>
struct LossExample {
    Tensor<T> t1;              // the (first) transformed input
    Tensor<T> t2;              // second transform, combined objective only
    Tensor<T> raw;             // untransformed input for the +std terms
    std::vector<T> target;
};

/// Mean cross-entropy of f(t1(x)) against y — training purely on transformed
/// examples. backprop accumulates parameter gradients.
template <class T>
T loss_flowaug(ClassifierT<T>& f, const std::vector<LossExample<T>>& batch, bool backprop);

/// loss_flowaug plus lambda times the mean cross-entropy on the raw inputs.
template <class T>
T loss_flowaug_std(ClassifierT<T>& f, const std::vector<LossExample<T>>& batch, T lambda,
                   bool backprop);

/// Mean of L(f(t1(x)),y) + lambda1 L(f(t2(x)),y) + lambda2 L(f(x),y).
template <class T>
T loss_combine(ClassifierT<T>& f, const std::vector<LossExample<T>>& batch, T lambda1, T lambda2,
               bool backprop);

extern template float loss_flowaug(ClassifierT<float>&, const std::vector<LossExample<float>>&,
                                   bool);
extern template double loss_flowaug(ClassifierT<double>&, const std::vector<LossExample<double>>&,
                                    bool);
extern template float loss_flowaug_std(ClassifierT<float>&,
                                       const std::vector<LossExample<float>>&, float, bool);
extern template double loss_flowaug_std(ClassifierT<double>&,
                                        const std::vector<LossExample<double>>&, double, bool);
extern template float loss_combine(ClassifierT<float>&, const std::vector<LossExample<float>>&,
                                   float, float, bool);
extern template double loss_combine(ClassifierT<double>&, const std::vector<LossExample<double>>&,
                                    double, double, bool);

/// Fraction of examples whose argmax logit matches the label.
double evaluate_accuracy(Classifier& f, const std::vector<synth::LabeledExample>& examples);

/// Argmax predictions in example order.
std::vector<int> predict_labels(Classifier& f, const std::vector<synth::LabeledExample>& examples);

struct TrainCallbacks {
    std::function<void(const EpochStats&)> on_epoch;
    /// Fires after every optimizer step with the step's batch loss.
    std::function<void(int epoch, int step, double loss)> on_step;
};

/// SGD-with-momentum training under the configured method. The model's
/// parameters are re-initialized from cfg.seed before the first step, so a
/// given (config, seed) always produces the same trajectory. `flow` must be
/// non-null for flow-transforming methods (checked before any work). When
/// checkpoint_dir is nonempty, best.ckpt / last.ckpt are written there.
TrainResult train_classifier(Classifier& model,
                             const std::vector<synth::LabeledExample>& train_set,
                             const std::vector<synth::LabeledExample>& test_set,
                             const TrainConfig& cfg, flow::FlowModel* flow,
                             const std::string& checkpoint_dir = {},
                             const TrainCallbacks& callbacks = {});

}  // namespace flowlab::trainer
