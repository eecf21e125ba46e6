#pragma once

#include "mmfbsde/cli/config.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace mmfbsde::cli {

struct AuditItem {
    std::string name;
    std::size_t parameters = 0;
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    bool passed = false;
};

inline constexpr double kAuditTolerance = 1e-4;

// Reverse-mode gradients against central differences for every primitive,
// one LSTM step, and the training loss of a 5-step, 2-sample rollout of the
// configured system.
std::vector<AuditItem> gradient_audit(const ExperimentConfig& cfg, std::uint64_t seed);

nlohmann::json audit_json(const std::vector<AuditItem>& items);

}  // namespace mmfbsde::cli
