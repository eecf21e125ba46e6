#pragma once

#include "mmfbsde/core/rollout.hpp"
#include "mmfbsde/training/param_store.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace mmfbsde::eval {

inline constexpr const char* kReportSchema = "mmfbsde-eval/1";
inline constexpr const char* kTrajectorySchema = "mmfbsde-trajectory/1";
inline constexpr const char* kSweepSchema = "mmfbsde-sweep/1";

// Per-state tolerance on the terminal deviation from the target (angles
// wrapped). Infinite entries are unconstrained.
struct SuccessCriterion {
    std::vector<double> tolerance;

    static SuccessCriterion for_system(std::string_view system, std::size_t state_dim);
    nlohmann::json to_json() const;
};

bool task_success(std::span<const double> terminal_state, const sys::CostSpec& costs,
                  const SuccessCriterion& criterion);
// Uses the last state of a trajectory (one state per row).
bool task_success(const Matrix& trajectory, const sys::CostSpec& costs, const SuccessCriterion& criterion);

// Σ_n Σ_j of the unbiased across-trajectory variance. Each trajectory has
// one row per recorded step and one column per state.
double total_state_variance(std::span<const Matrix> trajectories);

struct ConditionReport {
    std::string label;
    std::string mode;
    bool adversary = false;
    double epsilon = 0.0;
    std::uint64_t seed = 0;
    std::size_t m_test = 0;
    std::size_t valid = 0;
    std::size_t diverged = 0;
    std::size_t adversary_evaluations = 0;
    double total_variance = 0.0;
    double mean_terminal_cost = 0.0;
    double success_rate = 0.0;
    std::vector<double> times;
    Matrix mean;    // (steps + 1) × n
    Matrix stddev;  // (steps + 1) × n
    std::vector<double> terminal_mean;

    nlohmann::json to_json() const;
};

// Tape-free rollouts of the trained policy on M_test samples drawn from
// CounterNoise(seed, 0). Diverged samples are counted and excluded.
ConditionReport evaluate(const train::ParamStore& store, const core::RolloutContext& ctx,
                         std::size_t m_test, std::uint64_t seed, const SuccessCriterion& criterion,
                         std::size_t workers = 1, std::size_t chunk = 32);

// Same statistics for an arbitrary batch record.
ConditionReport summarize(const core::RolloutRecord<Matrix>& rec, const std::vector<bool>& diverged,
                          const core::RolloutContext& ctx, const SuccessCriterion& criterion);

struct Comparison {
    std::string treatment;
    std::string reference;
    double treatment_variance = 0.0;
    double reference_variance = 0.0;
    // 100 (1 − V_treatment / V_reference)
    double reduction_percent = 0.0;
};

Comparison compare(const ConditionReport& treatment, const ConditionReport& reference);

struct EvalReport {
    std::string system;
    nlohmann::json run;  // resolved config and seeds
    SuccessCriterion criterion;
    std::vector<ConditionReport> conditions;
    std::vector<Comparison> comparisons;

    nlohmann::json to_json() const;
};

// step,time,mean_j,std_j,lower_j,upper_j with bands at mean ± 1.96 std.
void write_trajectory_csv(const std::filesystem::path& path, const ConditionReport& report);
void write_report(const std::filesystem::path& path, const EvalReport& report);

struct SweepRow {
    double epsilon = 0.0;
    bool ok = false;  // training and evaluation completed
    std::string error;
    double total_variance = std::numeric_limits<double>::quiet_NaN();
    double success_rate = 0.0;
    double mean_terminal_cost = std::numeric_limits<double>::quiet_NaN();
    std::size_t diverged = 0;
    bool success = false;  // ok and success_rate ≥ the run threshold
};

// Runs `train_and_evaluate` per ε; a throwing ε becomes a failed row.
std::vector<SweepRow> epsilon_sweep(std::span<const double> epsilons,
                                    const std::function<ConditionReport(double)>& train_and_evaluate,
                                    double run_success_rate);

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows,
                     const std::optional<ConditionReport>& baseline);

}  // namespace mmfbsde::eval
