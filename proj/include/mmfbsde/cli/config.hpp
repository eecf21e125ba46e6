#pragma once

#include "mmfbsde/core/grid.hpp"
#include "mmfbsde/core/rollout.hpp"
#include "mmfbsde/evaluation/evaluate.hpp"
#include "mmfbsde/neural/lstm.hpp"
#include "mmfbsde/systems/cost.hpp"
#include "mmfbsde/systems/system.hpp"
#include "mmfbsde/training/trainer.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmfbsde::cli {

inline constexpr const char* kConfigSchema = "mmfbsde-config/1";

// Raised for every rejected config; `path` is the dotted key at fault.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(const std::string& path, const std::string& what)
        : std::invalid_argument(path + ": " + what), path_(path) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

struct ExperimentConfig {
    std::string system;
    nlohmann::json physics;
    std::string noise_preset;  // low | high | custom
    double noise_scale = 0.0;
    std::vector<double> initial_state;

    struct Costs {
        std::vector<double> running_weights;
        std::vector<double> terminal_weights;
        std::vector<double> target;
        Matrix control_weight;
        double epsilon = 0.0;
        double beta = 0.8;
        double lambda = 1e-4;
    } costs;

    struct Horizon {
        double t0 = 0.0;
        double horizon = 0.0;
        std::size_t steps = 0;
    } horizon;

    struct Network {
        std::size_t hidden1 = 16;
        std::size_t hidden2 = 16;
        double forget_bias = 1.0;
    } network;

    struct Train {
        std::size_t iterations = 0;
        std::size_t batch = 0;
        std::size_t chunk = 32;
        double learning_rate = 1e-3;
        double psi_learning_rate = 1e-2;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double adam_epsilon = 1e-8;
        double grad_clip = 0.0;
        double max_divergence_fraction = 0.1;
        std::size_t checkpoint_every = 0;
        std::uint64_t seed = 1;
        std::uint64_t init_seed = 7;
    } train;

    struct Eval {
        std::size_t m_test = 128;
        std::uint64_t seed = 1001;
        std::size_t chunk = 32;
    } eval;

    struct Success {
        std::vector<double> tolerance;  // +inf when unconstrained
        double run_success_rate = 0.8;
    } success;

    std::vector<double> sweep_epsilons;
    core::Mode mode = core::Mode::MinMax;
    std::string out;
    std::size_t workers = 1;

    nlohmann::json to_json() const;
    // Validates and converts a fully merged document.
    static ExperimentConfig from_json(const nlohmann::json& j);
    // FNV-1a over everything that influences the trained parameters.
    std::string model_hash() const;

    friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
        return a.to_json() == b.to_json();
    }
};

// Fully defaulted document for a system and noise preset.
nlohmann::json default_config(const std::string& system, const std::string& noise_preset = "low");

// Sets `dotted.path=value`; the value is read as JSON when it parses,
// otherwise as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

// Parses an optional config file (JSON) plus overrides, merges over the
// defaults for the selected system and validates the result. Unknown keys
// and type mismatches are rejected with the offending path.
ExperimentConfig parse_config(const std::optional<std::filesystem::path>& file,
                              const std::vector<std::string>& overrides = {});
ExperimentConfig parse_config_json(nlohmann::json user, const std::vector<std::string>& overrides = {});

// Runtime objects built from a config. Holds the system and costs at stable
// addresses so rollout contexts may point into it.
struct Experiment {
    ExperimentConfig config;
    std::unique_ptr<sys::SystemModel> system;
    std::unique_ptr<sys::CostSpec> costs;
    core::HorizonGrid grid;

    static std::unique_ptr<Experiment> build(const ExperimentConfig& cfg);

    core::RolloutContext context(bool adversary) const;
    nn::NetConfig net_config() const;
    nn::AdamConfig adam_config() const;
    train::ParamStore initial_store() const;
    train::TrainConfig train_config(const std::filesystem::path& out_dir) const;
    eval::SuccessCriterion success_criterion() const;
};

std::string fnv1a_hex(const std::string& bytes);

}  // namespace mmfbsde::cli
