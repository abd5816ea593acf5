#include "flowlab/trainer/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "flowlab/nn/optim.hpp"
#include "flowlab/trainer/baselines.hpp"

namespace flowlab::trainer {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct MethodName {
    Method method;
    const char* name;
};

constexpr MethodName kMethods[] = {
    {Method::standard, "standard"},
    {Method::mixup, "mixup"},
    {Method::cutout, "cutout"},
    {Method::cutmix, "cutmix"},
    {Method::flowaug_gauss, "flowaug_gauss"},
    {Method::flowaug_mix, "flowaug_mix"},
    {Method::flowaug_plus_std, "flowaug_plus_std"},
    {Method::combine, "combine"},
    {Method::flowaug_gauss_cutmix, "flowaug_gauss_cutmix"},
};

}  // namespace

Method method_from_name(const std::string& name) {
    for (const auto& m : kMethods)
        if (name == m.name) return m.method;
    throw std::invalid_argument("train config: unknown method \"" + name + "\"");
}

std::string method_name(Method m) {
    for (const auto& mn : kMethods)
        if (mn.method == m) return mn.name;
    throw std::invalid_argument("train config: bad method value");
}

bool method_needs_flow(Method m) {
    switch (m) {
        case Method::flowaug_gauss:
        case Method::flowaug_mix:
        case Method::flowaug_plus_std:
        case Method::combine:
        case Method::flowaug_gauss_cutmix:
            return true;
        default:
            return false;
    }
}

void LrSchedule::validate() const {
    if (initial <= 0) throw std::invalid_argument("train config: lr must be > 0");
    if (factor <= 0 || factor > 1)
        throw std::invalid_argument("train config: lr decay factor must be in (0, 1]");
    for (std::size_t i = 0; i < decay_epochs.size(); ++i) {
        if (decay_epochs[i] < 1)
            throw std::invalid_argument("train config: decay epochs must be >= 1");
        if (i > 0 && decay_epochs[i] <= decay_epochs[i - 1])
            throw std::invalid_argument("train config: decay epochs must be increasing");
    }
}

std::vector<int> LrSchedule::resolved_milestones(int epochs) const {
    if (!decay_epochs.empty()) return decay_epochs;
    std::vector<int> ms;
    for (int m : {epochs / 2, 3 * epochs / 4})
        if (m >= 2 && m <= epochs && (ms.empty() || m > ms.back())) ms.push_back(m);
    return ms;
}

double LrSchedule::rate_at(int epoch, int epochs, int batch) const {
    double rate = initial * static_cast<double>(batch) / 128.0;
    for (int m : resolved_milestones(epochs))
        if (epoch >= m) rate *= factor;
    return rate;
}

nlohmann::json LrSchedule::to_json() const {
    return {{"initial", initial}, {"decay_epochs", decay_epochs}, {"factor", factor}};
}

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
    if (batch < 1) throw std::invalid_argument("train config: batch must be >= 1");
    if (lambda < 0 || lambda1 < 0 || lambda2 < 0)
        throw std::invalid_argument("train config: lambda weights must be >= 0");
    if (mix_alpha <= 0) throw std::invalid_argument("train config: alpha must be > 0");
    if (cutout_size < 0) throw std::invalid_argument("train config: cutout size must be >= 0");
    if (momentum < 0 || momentum >= 1)
        throw std::invalid_argument("train config: momentum must be in [0, 1)");
    if (weight_decay < 0) throw std::invalid_argument("train config: weight decay must be >= 0");
    if (k_per_source < 1) throw std::invalid_argument("train config: K must be >= 1");
    lr.validate();
    if (method_needs_flow(method)) {
        gauss.validate();
        mix.validate();
    }
}

nlohmann::json TrainConfig::to_json() const {
    nlohmann::json j;
    j["method"] = method_name(method);
    j["alpha"] = mix_alpha;
    j["cutout_size"] = cutout_size;
    j["cutout_fill"] = {cutout_fill[0], cutout_fill[1], cutout_fill[2]};
    j["lambda"] = lambda;
    j["lambda1"] = lambda1;
    j["lambda2"] = lambda2;
    j["plus_std_transform"] =
        plus_std_transform == aug::AugmentationSpec::Method::gaussian ? "gaussian" : "mix";
    j["gauss"] = gauss.to_json();
    j["mix"] = mix.to_json();
    j["k_per_source"] = k_per_source;
    j["inline_aug"] = inline_aug;
    if (!flow_checkpoint.empty()) j["flow_checkpoint"] = flow_checkpoint;
    j["epochs"] = epochs;
    j["batch"] = batch;
    j["lr"] = lr.to_json();
    j["momentum"] = momentum;
    j["weight_decay"] = weight_decay;
    j["seed"] = seed;
    return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    if (j.contains("method")) c.method = method_from_name(j.at("method").get<std::string>());
    c.mix_alpha = j.value("alpha", c.mix_alpha);
    c.cutout_size = j.value("cutout_size", c.cutout_size);
    if (j.contains("cutout_fill")) {
        const auto& f = j.at("cutout_fill");
        if (!f.is_array() || f.size() != 3)
            throw std::invalid_argument("train config: cutout_fill must be [r, g, b]");
        for (int i = 0; i < 3; ++i)
            c.cutout_fill[static_cast<std::size_t>(i)] = f.at(i).get<float>();
    }
    c.lambda = j.value("lambda", c.lambda);
    c.lambda1 = j.value("lambda1", c.lambda1);
    c.lambda2 = j.value("lambda2", c.lambda2);
    if (j.contains("plus_std_transform")) {
        const std::string t = j.at("plus_std_transform").get<std::string>();
        if (t == "gaussian")
            c.plus_std_transform = aug::AugmentationSpec::Method::gaussian;
        else if (t == "mix")
            c.plus_std_transform = aug::AugmentationSpec::Method::mix;
        else
            throw std::invalid_argument("train config: plus_std_transform must be gaussian|mix");
    }
    if (j.contains("gauss")) c.gauss = aug::PerturbSpec::from_json(j.at("gauss"));
    if (j.contains("mix")) c.mix = aug::MixSpec::from_json(j.at("mix"));
    c.k_per_source = j.value("k_per_source", c.k_per_source);
    c.inline_aug = j.value("inline_aug", c.inline_aug);
    c.flow_checkpoint = j.value("flow_checkpoint", c.flow_checkpoint);
    c.epochs = j.value("epochs", c.epochs);
    c.batch = j.value("batch", c.batch);
    if (j.contains("lr")) {
        const auto& l = j.at("lr");
        c.lr.initial = l.value("initial", c.lr.initial);
        if (l.contains("decay_epochs"))
            c.lr.decay_epochs = l.at("decay_epochs").get<std::vector<int>>();
        c.lr.factor = l.value("factor", c.lr.factor);
    }
    c.momentum = j.value("momentum", c.momentum);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

namespace {

/// Mean cross-entropy of f(field) against the targets, scaled by `weight`.
/// backprop accumulates weight/batch-scaled gradients into f's parameters.
template <class T>
T ce_term(ClassifierT<T>& f, const std::vector<LossExample<T>>& batch,
          const Tensor<T> LossExample<T>::*field, T weight, bool backprop) {
    const T scale = weight / static_cast<T>(batch.size());
    double total = 0;
    for (const auto& ex : batch) {
        const Tensor<T>& x = ex.*field;
        if (x.size() == 0) throw std::invalid_argument("loss: example is missing an input slot");
        Tensor<T> logits = f.logits(x);
        total += static_cast<double>(cross_entropy(logits, ex.target));
        if (backprop) {
            Tensor<T> g = cross_entropy_grad(logits, ex.target);
            for (auto& v : g.span()) v *= scale;
            f.backward(g);
        }
    }
    return static_cast<T>(static_cast<double>(scale) * total);
}

}  // namespace

template <class T>
T loss_flowaug(ClassifierT<T>& f, const std::vector<LossExample<T>>& batch, bool backprop) {
    if (batch.empty()) throw std::invalid_argument("loss: empty batch");
    return ce_term(f, batch, &LossExample<T>::t1, T(1), backprop);
}

template <class T>
T loss_flowaug_std(ClassifierT<T>& f, const std::vector<LossExample<T>>& batch, T lambda,
                   bool backprop) {
    if (batch.empty()) throw std::invalid_argument("loss: empty batch");
    if (lambda < T(0)) throw std::invalid_argument("loss: lambda must be >= 0");
    T loss = ce_term(f, batch, &LossExample<T>::t1, T(1), backprop);
    if (lambda > T(0)) loss += ce_term(f, batch, &LossExample<T>::raw, lambda, backprop);
    return loss;
}

template <class T>
T loss_combine(ClassifierT<T>& f, const std::vector<LossExample<T>>& batch, T lambda1, T lambda2,
               bool backprop) {
    if (batch.empty()) throw std::invalid_argument("loss: empty batch");
    if (lambda1 < T(0) || lambda2 < T(0))
        throw std::invalid_argument("loss: lambda weights must be >= 0");
    T loss = ce_term(f, batch, &LossExample<T>::t1, T(1), backprop);
    if (lambda1 > T(0)) loss += ce_term(f, batch, &LossExample<T>::t2, lambda1, backprop);
    if (lambda2 > T(0)) loss += ce_term(f, batch, &LossExample<T>::raw, lambda2, backprop);
    return loss;
}

template float loss_flowaug(ClassifierT<float>&, const std::vector<LossExample<float>>&, bool);
template double loss_flowaug(ClassifierT<double>&, const std::vector<LossExample<double>>&, bool);
template float loss_flowaug_std(ClassifierT<float>&, const std::vector<LossExample<float>>&, float,
                                bool);
template double loss_flowaug_std(ClassifierT<double>&, const std::vector<LossExample<double>>&,
                                 double, bool);
template float loss_combine(ClassifierT<float>&, const std::vector<LossExample<float>>&, float,
                            float, bool);
template double loss_combine(ClassifierT<double>&, const std::vector<LossExample<double>>&, double,
                             double, bool);

double evaluate_accuracy(Classifier& f, const std::vector<synth::LabeledExample>& examples) {
    if (examples.empty()) throw std::invalid_argument("evaluate: empty example set");
    std::size_t hits = 0;
    for (const auto& ex : examples)
        if (f.predict(ex.image) == ex.class_label) ++hits;
    return static_cast<double>(hits) / static_cast<double>(examples.size());
}

std::vector<int> predict_labels(Classifier& f, const std::vector<synth::LabeledExample>& examples) {
    std::vector<int> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) out.push_back(f.predict(ex.image));
    return out;
}

namespace {

/// Shared state for producing the epoch's flow-transformed views. Every
/// virtual example (source index x copy k) owns an RNG stream derived from
/// (seed, epoch, virtual index), so the precomputed and inline paths produce
/// byte-identical batches and order never matters.
struct FlowAugmenter {
    flow::FlowModel* flow = nullptr;
    const std::vector<synth::LabeledExample>* train = nullptr;
    const TrainConfig* cfg = nullptr;

    bool wants_second(Method m) const { return m == Method::combine; }

    Rng stream(int epoch, std::size_t v) const {
        const std::uint64_t e = static_cast<std::uint64_t>(epoch);
        return Rng(derive_seed(derive_seed(cfg->seed, "cls.flow", e), "v", v));
    }

    Image transform_one(const aug::PerturbSpec& spec, std::size_t src, Rng& rng) const {
        return aug::augment_gaussian(*flow, (*train)[src].image, spec, rng);
    }

    Image transform_mix(std::size_t src, Rng& rng) const {
        const std::size_t partner = rng.below(train->size());
        return aug::augment_mix(*flow, (*train)[src].image, (*train)[partner].image, cfg->mix,
                                rng);
    }

    /// t1 (and t2 when the method needs both) for virtual example v.
    void make(int epoch, std::size_t v, std::size_t src, Image& t1, Image* t2) const {
        Rng rng = stream(epoch, v);
        switch (cfg->method) {
            case Method::flowaug_gauss:
            case Method::flowaug_gauss_cutmix:
                t1 = transform_one(cfg->gauss, src, rng);
                break;
            case Method::flowaug_mix:
                t1 = transform_mix(src, rng);
                break;
            case Method::flowaug_plus_std:
                t1 = cfg->plus_std_transform == aug::AugmentationSpec::Method::gaussian
                         ? transform_one(cfg->gauss, src, rng)
                         : transform_mix(src, rng);
                break;
            case Method::combine:
                t1 = transform_one(cfg->gauss, src, rng);
                if (t2) *t2 = transform_mix(src, rng);
                break;
            default:
                throw std::logic_error("flow augmenter called for a pixel-space method");
        }
    }
};

}  // namespace

TrainResult train_classifier(Classifier& model,
                             const std::vector<synth::LabeledExample>& train_set,
                             const std::vector<synth::LabeledExample>& test_set,
                             const TrainConfig& cfg, flow::FlowModel* flow,
                             const std::string& checkpoint_dir, const TrainCallbacks& callbacks) {
    cfg.validate();
    const bool needs_flow = method_needs_flow(cfg.method);
    if (needs_flow && !flow)
        throw std::invalid_argument("train: method " + method_name(cfg.method) +
                                    " requires a flow model (set flow_checkpoint)");
    if (train_set.empty()) throw std::invalid_argument("train: empty training set");
    if (test_set.empty()) throw std::invalid_argument("train: empty test set");
    const int C = model.arch().num_classes;
    for (const auto& ex : train_set)
        if (ex.class_label < 0 || ex.class_label >= C)
            throw std::invalid_argument("train: class label out of range");
    if (needs_flow && (flow->arch().height != model.arch().height ||
                       flow->arch().width != model.arch().width))
        throw std::invalid_argument("train: flow and classifier resolutions differ");

    const std::size_t n = train_set.size();
    const std::size_t k = needs_flow ? static_cast<std::size_t>(cfg.k_per_source) : 1;
    const std::size_t n_virtual = n * k;

    Rng init_rng(derive_seed(cfg.seed, "cls.init"));
    model.init(init_rng);

    FlowAugmenter augmenter{flow, &train_set, &cfg};
    nn::SgdMomentum<float> opt(model.params(), static_cast<float>(cfg.lr.rate_at(1, cfg.epochs,
                                                                                 cfg.batch)),
                               static_cast<float>(cfg.momentum),
                               static_cast<float>(cfg.weight_decay));

    auto target_of = [&](std::size_t src) { return one_hot(C, train_set[src].class_label); };

    TrainResult result;
    std::string best_path, last_path;
    if (!checkpoint_dir.empty()) {
        std::filesystem::create_directories(checkpoint_dir);
        best_path = (std::filesystem::path(checkpoint_dir) / "best.ckpt").string();
        last_path = (std::filesystem::path(checkpoint_dir) / "last.ckpt").string();
    }

    const bool precompute = needs_flow && !cfg.inline_aug;
    std::vector<Image> pre_t1, pre_t2;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = Clock::now();
        const double lr = cfg.lr.rate_at(epoch, cfg.epochs, cfg.batch);
        opt.set_lr(static_cast<float>(lr));

        if (precompute) {
            pre_t1.resize(n_virtual);
            if (augmenter.wants_second(cfg.method)) pre_t2.resize(n_virtual);
            for (std::size_t v = 0; v < n_virtual; ++v)
                augmenter.make(epoch, v, v / k, pre_t1[v],
                               pre_t2.empty() ? nullptr : &pre_t2[v]);
        }

        std::vector<std::size_t> order(n_virtual);
        for (std::size_t i = 0; i < n_virtual; ++i) order[i] = i;
        Rng order_rng(derive_seed(cfg.seed, "cls.order", static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = n_virtual - 1; i > 0; --i)
            std::swap(order[i], order[order_rng.below(i + 1)]);

        Rng aug_rng(derive_seed(cfg.seed, "cls.aug", static_cast<std::uint64_t>(epoch)));

        double loss_sum = 0;
        int steps = 0;
        for (std::size_t start = 0; start < n_virtual; start += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t stop = std::min(n_virtual, start + static_cast<std::size_t>(cfg.batch));
            const std::size_t b = stop - start;

            // Materialize the flow views for this batch (precomputed or fresh).
            std::vector<Image> view1(b), view2;
            if (augmenter.wants_second(cfg.method)) view2.resize(b);
            if (needs_flow) {
                for (std::size_t i = 0; i < b; ++i) {
                    const std::size_t v = order[start + i];
                    if (precompute) {
                        view1[i] = pre_t1[v];
                        if (!view2.empty()) view2[i] = pre_t2[v];
                    } else {
                        augmenter.make(epoch, v, v / k, view1[i],
                                       view2.empty() ? nullptr : &view2[i]);
                    }
                }
            }

            std::vector<LossExample<float>> batch(b);
            auto src_of = [&](std::size_t i) { return order[start + i] / k; };

            switch (cfg.method) {
                case Method::standard:
                    for (std::size_t i = 0; i < b; ++i) {
                        batch[i].t1 = image_to_chw<float>(train_set[src_of(i)].image);
                        batch[i].target = target_of(src_of(i));
                    }
                    break;
                case Method::cutout:
                    for (std::size_t i = 0; i < b; ++i) {
                        batch[i].t1 = image_to_chw<float>(
                            cutout(train_set[src_of(i)].image, cfg.cutout_size, cfg.cutout_fill,
                                   aug_rng));
                        batch[i].target = target_of(src_of(i));
                    }
                    break;
                case Method::mixup: {
                    std::vector<std::size_t> partner(b);
                    for (std::size_t i = 0; i < b; ++i) partner[i] = i;
                    for (std::size_t i = b - 1; i > 0; --i)
                        std::swap(partner[i], partner[aug_rng.below(i + 1)]);
                    const double lam = aug_rng.beta(cfg.mix_alpha, cfg.mix_alpha);
                    for (std::size_t i = 0; i < b; ++i) {
                        Image mixed;
                        std::vector<float> y;
                        mix_examples(train_set[src_of(i)].image, target_of(src_of(i)),
                                     train_set[src_of(partner[i])].image,
                                     target_of(src_of(partner[i])), lam, mixed, y);
                        batch[i].t1 = image_to_chw<float>(mixed);
                        batch[i].target = std::move(y);
                    }
                    break;
                }
                case Method::cutmix: {
                    std::vector<std::size_t> partner(b);
                    for (std::size_t i = 0; i < b; ++i) partner[i] = i;
                    for (std::size_t i = b - 1; i > 0; --i)
                        std::swap(partner[i], partner[aug_rng.below(i + 1)]);
                    const double lam = aug_rng.beta(cfg.mix_alpha, cfg.mix_alpha);
                    const double ratio = std::sqrt(1.0 - lam);
                    const Image& first = train_set[src_of(0)].image;
                    const int bh = static_cast<int>(std::lround(first.h * ratio));
                    const int bw = static_cast<int>(std::lround(first.w * ratio));
                    const int cy = static_cast<int>(aug_rng.below(static_cast<std::uint64_t>(first.h)));
                    const int cx = static_cast<int>(aug_rng.below(static_cast<std::uint64_t>(first.w)));
                    for (std::size_t i = 0; i < b; ++i) {
                        Image mixed;
                        std::vector<float> y;
                        cutmix_apply(train_set[src_of(i)].image, target_of(src_of(i)),
                                     train_set[src_of(partner[i])].image,
                                     target_of(src_of(partner[i])), cy - bh / 2, cx - bw / 2, bh,
                                     bw, mixed, y);
                        batch[i].t1 = image_to_chw<float>(mixed);
                        batch[i].target = std::move(y);
                    }
                    break;
                }
                case Method::flowaug_gauss:
                case Method::flowaug_mix:
                    for (std::size_t i = 0; i < b; ++i) {
                        batch[i].t1 = image_to_chw<float>(view1[i]);
                        batch[i].target = target_of(src_of(i));
                    }
                    break;
                case Method::flowaug_plus_std:
                    for (std::size_t i = 0; i < b; ++i) {
                        batch[i].t1 = image_to_chw<float>(view1[i]);
                        batch[i].raw = image_to_chw<float>(train_set[src_of(i)].image);
                        batch[i].target = target_of(src_of(i));
                    }
                    break;
                case Method::combine:
                    for (std::size_t i = 0; i < b; ++i) {
                        batch[i].t1 = image_to_chw<float>(view1[i]);
                        batch[i].t2 = image_to_chw<float>(view2[i]);
                        batch[i].raw = image_to_chw<float>(train_set[src_of(i)].image);
                        batch[i].target = target_of(src_of(i));
                    }
                    break;
                case Method::flowaug_gauss_cutmix: {
                    // Cutmix composed over the flow-transformed batch.
                    std::vector<std::size_t> partner(b);
                    for (std::size_t i = 0; i < b; ++i) partner[i] = i;
                    for (std::size_t i = b - 1; i > 0; --i)
                        std::swap(partner[i], partner[aug_rng.below(i + 1)]);
                    const double lam = aug_rng.beta(cfg.mix_alpha, cfg.mix_alpha);
                    const double ratio = std::sqrt(1.0 - lam);
                    const Image& first = view1[0];
                    const int bh = static_cast<int>(std::lround(first.h * ratio));
                    const int bw = static_cast<int>(std::lround(first.w * ratio));
                    const int cy = static_cast<int>(aug_rng.below(static_cast<std::uint64_t>(first.h)));
                    const int cx = static_cast<int>(aug_rng.below(static_cast<std::uint64_t>(first.w)));
                    for (std::size_t i = 0; i < b; ++i) {
                        Image mixed;
                        std::vector<float> y;
                        cutmix_apply(view1[i], target_of(src_of(i)), view1[partner[i]],
                                     target_of(src_of(partner[i])), cy - bh / 2, cx - bw / 2, bh,
                                     bw, mixed, y);
                        batch[i].t1 = image_to_chw<float>(mixed);
                        batch[i].target = std::move(y);
                    }
                    break;
                }
            }

            opt.zero_grad();
            double loss = 0;
            switch (cfg.method) {
                case Method::flowaug_plus_std:
                    loss = loss_flowaug_std(model, batch, static_cast<float>(cfg.lambda), true);
                    break;
                case Method::combine:
                    loss = loss_combine(model, batch, static_cast<float>(cfg.lambda1),
                                        static_cast<float>(cfg.lambda2), true);
                    break;
                default:
                    loss = loss_flowaug(model, batch, true);
                    break;
            }
            opt.step();
            loss_sum += loss;
            ++steps;
            if (callbacks.on_step) callbacks.on_step(epoch, steps, loss);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.loss = loss_sum / steps;
        stats.test_acc = evaluate_accuracy(model, test_set);
        stats.lr = lr;
        stats.seconds = elapsed(t0);
        result.epochs.push_back(stats);

        if (stats.test_acc > result.best_acc || result.best_epoch == 0) {
            result.best_acc = stats.test_acc;
            result.best_epoch = epoch;
            if (!best_path.empty()) {
                nlohmann::json echo = {{"config", cfg.to_json()},
                                       {"epoch", epoch},
                                       {"test_acc", stats.test_acc},
                                       {"role", "best"}};
                save_classifier(best_path, model, echo);
            }
        }
        result.last_acc = stats.test_acc;
        if (callbacks.on_epoch) callbacks.on_epoch(stats);
    }

    if (!last_path.empty()) {
        nlohmann::json echo = {{"config", cfg.to_json()},
                               {"epoch", cfg.epochs},
                               {"test_acc", result.last_acc},
                               {"role", "last"}};
        save_classifier(last_path, model, echo);
    }
    return result;
}

}  // namespace flowlab::trainer
