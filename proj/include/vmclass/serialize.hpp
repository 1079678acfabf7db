#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "vmclass/data.hpp"
#include "vmclass/model.hpp"

namespace vmclass::model {

// Weight container layout:
//   "DVMW" | u32 version | u64 header bytes | UTF-8 JSON header | f32 payloads
// Integers and floats are little-endian. The header lists the tensor records
// {name, shape, dtype "f32"} in payload order together with the model spec.
inline constexpr char kWeightMagic[4] = {'D', 'V', 'M', 'W'};
inline constexpr std::uint32_t kWeightVersion = 1;

struct ModelFile {
    Network network;
    std::optional<data::Normalizer> normalizer;  // input statistics fitted on train
    nlohmann::json metadata = nlohmann::json::object();
};

nlohmann::json spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const nlohmann::json& j);

std::string serialize(const Network& net, const data::Normalizer* normalizer = nullptr,
                      const nlohmann::json& metadata = nlohmann::json::object());
ModelFile deserialize(const std::string& bytes);

void save(const Network& net, const std::filesystem::path& path,
          const data::Normalizer* normalizer = nullptr,
          const nlohmann::json& metadata = nlohmann::json::object());
ModelFile load_model_file(const std::filesystem::path& path);
Network load(const std::filesystem::path& path);

// Rounds every stored tensor to 32-bit precision, i.e. what a save/load
// round trip yields.
void round_to_storage_precision(Network& net);

}  // namespace vmclass::model
