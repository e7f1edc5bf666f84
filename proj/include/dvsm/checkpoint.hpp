#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <variant>

#include "json.hpp"

#include "dvsm/optim.hpp"
#include "dvsm/views.hpp"

namespace dvsm {

nlohmann::json to_json(const EncoderConfig& config);
/// Missing keys keep their defaults; unknown keys are a UsageError.
EncoderConfig encoder_config_from_json(const nlohmann::json& j, EncoderConfig base = {});

/// A loaded model with the optimizer state it was saved with, if any.
struct Checkpoint {
    std::variant<SiameseModel, CrossModel> model;
    std::optional<AdamState> optimizer;

    bool is_cross() const noexcept { return std::holds_alternative<CrossModel>(model); }
};

// File layout: "DVSMCKPT", u32 version, u64 header length, a JSON header
// (kind, task, pooling, outputs, encoder config, vocabulary, parameter names
// and shapes, optimizer hyperparameters), then every parameter as raw
// little-endian doubles in header order, then Adam first and second moments
// in the same order when present. Identical models give identical bytes.

std::string serialize_checkpoint(const SiameseModel& model, const AdamState* optimizer = nullptr);
std::string serialize_checkpoint(const CrossModel& model, const AdamState* optimizer = nullptr);
Checkpoint deserialize_checkpoint(std::string_view bytes, const std::string& source = "<memory>");

void save_checkpoint(const std::filesystem::path& path, const SiameseModel& model,
                     const AdamState* optimizer = nullptr);
void save_checkpoint(const std::filesystem::path& path, const CrossModel& model, const AdamState* optimizer = nullptr);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dvsm
