#pragma once

#include "mmfbsde/cli/config.hpp"
#include "mmfbsde/evaluation/evaluate.hpp"
#include "mmfbsde/training/trainer.hpp"

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

namespace mmfbsde::cli {

// Thrown for operator errors that map to a nonzero exit status.
class CommandError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string version_string();

// Writes resolved_config.json and run.json (config, hash, seeds, version).
void write_run_metadata(const ExperimentConfig& cfg, const std::filesystem::path& dir, const std::string& command);

struct TrainedRun {
    train::ParamStore store;
    std::vector<train::IterationLog> history;
    bool reused = false;  // loaded from an existing checkpoint
    bool aborted = false;
    std::string abort_reason;
};

// Trains into `dir`. With `reuse`, a complete checkpoint whose config hash
// matches is loaded instead.
TrainedRun train_run(const ExperimentConfig& cfg, const std::filesystem::path& dir, bool reuse,
                     std::ostream* log = nullptr);

// Evaluates a store with the adversary off.
eval::ConditionReport evaluate_run(const ExperimentConfig& cfg, const train::ParamStore& store,
                                   const std::string& label);

struct OracleResult {
    double riccati_value = 0.0;
    double trained_value = 0.0;
    double value_rel_error = 0.0;
    std::vector<double> riccati_z;
    std::vector<double> trained_z;
    double z_rel_error = 0.0;
    double scalar_p0 = 0.0;        // scalar sub-case, tanh(1)
    double step_halving_change = 0.0;
    std::vector<double> consistency_dts;
    std::vector<double> consistency_errors;
    bool value_ok = false, z_ok = false, scalar_ok = false, halving_ok = false, consistency_ok = false;

    bool passed() const { return value_ok && z_ok && scalar_ok && halving_ok && consistency_ok; }
    nlohmann::json to_json() const;
};

// `cfg` must describe the lq system.
OracleResult oracle_check(const ExperimentConfig& cfg, const std::filesystem::path& dir, bool reuse,
                          std::ostream* log = nullptr);

int cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& out,
             const std::optional<std::filesystem::path>& checkpoint,
             const std::optional<std::filesystem::path>& baseline_run, std::ostream& log);
int cmd_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_oracle_check(const ExperimentConfig& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_grad_check(const ExperimentConfig& cfg, const std::filesystem::path& out, std::uint64_t seed,
                   std::ostream& log);

}  // namespace mmfbsde::cli
