#pragma once

#include "mmfbsde/core/noise.hpp"
#include "mmfbsde/core/rollout.hpp"
#include "mmfbsde/training/param_store.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace mmfbsde::train {

struct TrainConfig {
    std::size_t iterations = 3000;
    std::size_t batch = 128;
    // Samples per tape. Fixed so the gradient reduction order does not
    // depend on the worker count.
    std::size_t chunk = 32;
    std::size_t workers = 1;
    std::uint64_t seed = 1;
    nn::AdamConfig adam;
    // Global-norm gradient clip; 0 disables it.
    double grad_clip = 0.0;
    double max_divergence_fraction = 0.1;
    // 0 writes a checkpoint only at completion.
    std::size_t checkpoint_every = 0;
    // Empty: nothing is written to disk.
    std::filesystem::path out_dir;
    std::string config_hash;

    void validate() const;
};

struct IterationLog {
    std::size_t iteration = 0;
    double loss = 0.0;
    double mean_terminal_cost = 0.0;
    std::size_t divergences = 0;
};

struct TrainResult {
    ParamStore store;
    std::vector<IterationLog> history;
    std::size_t rollbacks = 0;
    bool aborted = false;
    std::string abort_reason;
};

// Batch loss and its gradient with respect to every entry of the store.
struct LossGradient {
    double loss = 0.0;
    double mean_terminal_cost = 0.0;
    std::vector<double> grad;
    std::size_t valid = 0;
    std::size_t diverged = 0;
};

// Rolls out samples [0, batch) in chunks of `chunk` on separate tapes and
// sums the chunk gradients in chunk order. Diverged samples are dropped and
// the remaining ones re-taped.
LossGradient loss_and_gradient(const ParamStore& store, const core::RolloutContext& ctx,
                               const core::NoiseSource& noise, std::size_t batch, std::size_t chunk,
                               std::size_t workers = 1);

// Same loss without a tape, for finite differences.
double loss_value(const ParamStore& store, const core::RolloutContext& ctx,
                  const core::NoiseSource& noise, std::size_t batch);

// Iteration k draws its noise from CounterNoise(seed, k).
TrainResult train(const TrainConfig& cfg, const core::RolloutContext& ctx, ParamStore init,
                  const std::function<void(const IterationLog&)>& progress = {});

void write_loss_csv(const std::filesystem::path& path, const std::vector<IterationLog>& history);

}  // namespace mmfbsde::train
