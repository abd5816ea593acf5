#include "flowlab/flow/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "flowlab/core/rng.hpp"
#include "flowlab/nn/optim.hpp"

namespace flowlab::flow {

nlohmann::json FlowTrainConfig::to_json() const {
    return {{"epochs", epochs},          {"lr", lr},
            {"beta", beta},              {"warmup_frac", warmup_frac},
            {"divergence_bpd", divergence_bpd}, {"seed", seed}};
}

namespace {

/// Byte image -> dequantized CHW tensor: (255 x + u) / 256 with u ~ U[0,1)
/// per value. Pixels are stored on the k/255 grid, so 255 x recovers the
/// byte exactly.
Tensor<float> dequantize(const Image& im, Rng& rng) {
    Tensor<float> t({3, im.h, im.w});
    for (int y = 0; y < im.h; ++y)
        for (int x = 0; x < im.w; ++x)
            for (int c = 0; c < 3; ++c) {
                const float b = std::round(im.at(y, x, c) * 255.0f);
                t.at3(c, y, x) = (b + static_cast<float>(rng.uniform())) / 256.0f;
            }
    return t;
}

}  // namespace

FlowTrainResult train_flow(FlowModel& model, const std::vector<Image>& images,
                           const FlowTrainConfig& cfg,
                           const std::function<void(const FlowEpochStats&)>& on_epoch) {
    if (images.empty()) throw std::invalid_argument("flow training: no images");
    if (cfg.epochs < 1) throw std::invalid_argument("flow training: epochs must be >= 1");

    const std::size_t n = images.size();
    const std::size_t dims = static_cast<std::size_t>(3) * images[0].h * images[0].w;
    nn::Adam<float> opt(model.params(), static_cast<float>(cfg.lr));

    const double total_steps = static_cast<double>(cfg.epochs) * static_cast<double>(n);
    const double warmup_steps = std::max(1.0, std::ceil(cfg.warmup_frac * total_steps));

    Rng order_rng(derive_seed(cfg.seed, "flow.order"));
    Rng noise_rng(derive_seed(cfg.seed, "flow.noise"));

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});

    FlowTrainResult result;
    std::size_t step = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        // Fisher-Yates reshuffle each epoch.
        for (std::size_t i = n - 1; i > 0; --i)
            std::swap(idx[i], idx[static_cast<std::size_t>(order_rng.below(i + 1))]);

        double sum_nll = 0, sum_kl = 0, sum_obj = 0;
        for (std::size_t k = 0; k < n; ++k) {
            const Image& im = images[idx[k]];
            if (static_cast<std::size_t>(3) * im.h * im.w != dims)
                throw std::invalid_argument("flow training: images must share one shape");
            Tensor<float> x = dequantize(im, noise_rng);
            Tensor<float> eta({model.arch().dz});
            for (auto& e : eta.span()) e = static_cast<float>(noise_rng.normal());

            ++step;
            const double beta_t =
                cfg.beta * std::min(1.0, static_cast<double>(step) / warmup_steps);

            nn::zero_grads(model.params());
            ElboParts<float> parts;
            try {
                parts = model.elbo(x, static_cast<float>(beta_t), eta, true);
            } catch (const std::runtime_error& e) {
                throw std::runtime_error("flow training diverged at epoch " +
                                         std::to_string(epoch) + ": " + e.what());
            }
            opt.step();

            sum_nll += parts.nll_nats;
            sum_kl += parts.kl_nats;
            sum_obj += parts.objective;
        }

        FlowEpochStats st;
        st.epoch = epoch;
        st.bpd = bits_per_dim(sum_nll / static_cast<double>(n), dims);
        st.kl_nats = sum_kl / static_cast<double>(n);
        st.objective = sum_obj / static_cast<double>(n);
        st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.epochs.push_back(st);
        if (on_epoch) on_epoch(st);

        if (!std::isfinite(st.bpd) || st.bpd > cfg.divergence_bpd)
            throw std::runtime_error("flow training diverged at epoch " + std::to_string(epoch) +
                                     ": mean bpd " + std::to_string(st.bpd));
    }
    return result;
}

}  // namespace flowlab::flow
