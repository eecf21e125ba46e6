#pragma once

#include "mmfbsde/training/param_store.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

namespace mmfbsde::train {

inline constexpr const char* kCheckpointSchema = "mmfbsde-checkpoint/1";

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CheckpointInfo {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::size_t iteration = 0;
};

// Writes <dir>/manifest.json and <dir>/params.bin (values, Adam m, Adam v as
// little-endian 64-bit reals).
void save_checkpoint(const ParamStore& store, const CheckpointInfo& info,
                     const std::filesystem::path& dir);

struct LoadedCheckpoint {
    ParamStore store;
    CheckpointInfo info;
};

// When given, `expected_hash` and `expected_net` must match the manifest.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir,
                                 const std::optional<std::string>& expected_hash = std::nullopt,
                                 const std::optional<nn::NetConfig>& expected_net = std::nullopt);

}  // namespace mmfbsde::train
