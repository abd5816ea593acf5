#pragma once

#include <memory>
#include <string>

#include <json.hpp>

#include "flowlab/flow/model.hpp"

namespace flowlab::flow {

nlohmann::json arch_to_json(const FlowArch& arch);
FlowArch arch_from_json(const nlohmann::json& j);

/// Writes the model architecture (including the preprocessing constants and
/// code dimension), an optional training-config echo, and all parameters.
void save_checkpoint(const std::string& path, FlowModel& model,
                     const nlohmann::json& train_echo = nlohmann::json::object());

/// Rebuilds the model from the stored architecture. The descriptor is
/// validated before any parameter data is read; mismatches throw
/// std::runtime_error. If `train_echo` is non-null it receives the stored
/// training-config echo.
std::unique_ptr<FlowModel> load_checkpoint(const std::string& path,
                                           nlohmann::json* train_echo = nullptr);

}  // namespace flowlab::flow
