#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <json.hpp>

#include "flowlab/core/image.hpp"
#include "flowlab/flow/model.hpp"

namespace flowlab::flow {

struct FlowTrainConfig {
    int epochs = 12;
    double lr = 1e-3;            // Adam step size
    double beta = 1.0;           // final KL weight
    double warmup_frac = 0.1;    // KL weight ramps linearly over this step fraction
    double divergence_bpd = 16;  // abort if an epoch-mean bpd exceeds this
    std::uint64_t seed = 1;

    nlohmann::json to_json() const;
};

struct FlowEpochStats {
    int epoch = 0;           // 1-based
    double bpd = 0;          // mean bits/dim of the beta=1 bound
    double kl_nats = 0;      // mean KL term
    double objective = 0;    // mean training objective in nats
    double seconds = 0;
};

struct FlowTrainResult {
    std::vector<FlowEpochStats> epochs;
};

/// Trains the flow on the given images with Adam. Each visit dequantizes the
/// 8-bit pixels with fresh uniform noise, (255 x + u) / 256, so the model
/// sees a proper density target; encode/decode stay an exact bijection on
/// raw [0,1] images. Throws std::runtime_error naming the epoch if training
/// diverges. on_epoch (optional) fires after every epoch.
FlowTrainResult train_flow(FlowModel& model, const std::vector<Image>& images,
                           const FlowTrainConfig& cfg,
                           const std::function<void(const FlowEpochStats&)>& on_epoch = {});

}  // namespace flowlab::flow
