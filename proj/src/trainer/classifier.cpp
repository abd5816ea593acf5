#include "flowlab/trainer/classifier.hpp"

#include "flowlab/core/checkpoint.hpp"

namespace flowlab::trainer {

template class ClassifierT<float>;
template class ClassifierT<double>;

nlohmann::json classifier_arch_to_json(const ClassifierArch& a) {
    return {{"num_classes", a.num_classes},
            {"base", a.base},
            {"height", a.height},
            {"width", a.width}};
}

ClassifierArch classifier_arch_from_json(const nlohmann::json& j) {
    ClassifierArch a;
    a.num_classes = j.at("num_classes").get<int>();
    a.base = j.at("base").get<int>();
    a.height = j.at("height").get<int>();
    a.width = j.at("width").get<int>();
    a.validate();
    return a;
}

void save_classifier(const std::string& path, Classifier& model,
                     const nlohmann::json& train_echo) {
    nlohmann::json extra;
    extra["arch"] = classifier_arch_to_json(model.arch());
    extra["train"] = train_echo;
    ckpt::save(path, "classifier", extra, model.params());
}

std::unique_ptr<Classifier> load_classifier(const std::string& path, nlohmann::json* train_echo) {
    nlohmann::json header = ckpt::peek(path);
    if (header.at("kind").get<std::string>() != "classifier")
        throw std::runtime_error("checkpoint: kind mismatch in " + path + ": have \"" +
                                 header.at("kind").get<std::string>() +
                                 "\", expected \"classifier\"");
    const auto& extra = header.at("extra");
    if (!extra.contains("arch")) throw std::runtime_error("checkpoint: missing arch in " + path);
    ClassifierArch arch = classifier_arch_from_json(extra.at("arch"));

    auto model = std::make_unique<Classifier>(arch);
    nlohmann::json loaded = ckpt::load(path, "classifier", model->params());
    if (train_echo) *train_echo = loaded.contains("train") ? loaded.at("train") : nlohmann::json();
    return model;
}

}  // namespace flowlab::trainer
