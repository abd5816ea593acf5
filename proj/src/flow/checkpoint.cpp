#include "flowlab/flow/checkpoint.hpp"

#include "flowlab/core/checkpoint.hpp"

namespace flowlab::flow {

nlohmann::json arch_to_json(const FlowArch& arch) {
    return {{"dz", arch.dz},
            {"blocks", arch.blocks},
            {"coupling_width", arch.coupling_width},
            {"encoder_base", arch.encoder_base},
            {"height", arch.height},
            {"width", arch.width},
            {"squeeze_eps", arch.squeeze_eps},
            {"scale_cap", arch.scale_cap}};
}

FlowArch arch_from_json(const nlohmann::json& j) {
    FlowArch arch;
    arch.dz = j.at("dz").get<int>();
    arch.blocks = j.at("blocks").get<int>();
    arch.coupling_width = j.at("coupling_width").get<int>();
    arch.encoder_base = j.at("encoder_base").get<int>();
    arch.height = j.at("height").get<int>();
    arch.width = j.at("width").get<int>();
    arch.squeeze_eps = j.at("squeeze_eps").get<float>();
    arch.scale_cap = j.at("scale_cap").get<float>();
    arch.validate();
    return arch;
}

void save_checkpoint(const std::string& path, FlowModel& model, const nlohmann::json& train_echo) {
    nlohmann::json extra;
    extra["arch"] = arch_to_json(model.arch());
    extra["train"] = train_echo;
    ckpt::save(path, "flow", extra, model.params());
}

std::unique_ptr<FlowModel> load_checkpoint(const std::string& path, nlohmann::json* train_echo) {
    nlohmann::json header = ckpt::peek(path);
    if (header.at("kind").get<std::string>() != "flow")
        throw std::runtime_error("checkpoint: kind mismatch in " + path + ": have \"" +
                                 header.at("kind").get<std::string>() + "\", expected \"flow\"");
    const auto& extra = header.at("extra");
    if (!extra.contains("arch")) throw std::runtime_error("checkpoint: missing arch in " + path);
    FlowArch arch = arch_from_json(extra.at("arch"));

    auto model = std::make_unique<FlowModel>(arch);
    nlohmann::json loaded = ckpt::load(path, "flow", model->params());
    if (train_echo) *train_echo = loaded.contains("train") ? loaded.at("train") : nlohmann::json();
    return model;
}

}  // namespace flowlab::flow
