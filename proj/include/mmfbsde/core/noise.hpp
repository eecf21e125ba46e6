#pragma once

#include "mmfbsde/autodiff/matrix.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace mmfbsde::core {

// Standard normal draws for the Brownian increments. One draw per
// (sample, step, channel); the FSDE and BSDE of a step consume the same one.
class NoiseSource {
public:
    virtual ~NoiseSource() = default;
    // Fills `out` (channels × samples.size()) with N(0,1) draws for `step`.
    virtual void draw(std::size_t step, std::span<const std::size_t> samples, Matrix& out) const = 0;
};

// Stateless counter-based stream: the draw for (seed, stream, sample, step,
// channel) is a pure function of those integers, so any subset of samples
// can be regenerated in any order or on any thread.
class CounterNoise final : public NoiseSource {
public:
    CounterNoise(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}
    void draw(std::size_t step, std::span<const std::size_t> samples, Matrix& out) const override;

private:
    std::uint64_t seed_, stream_;
};

class ZeroNoise final : public NoiseSource {
public:
    void draw(std::size_t, std::span<const std::size_t>, Matrix& out) const override { out.fill(0.0); }
};

// Pre-recorded draws: steps[n] is channels × total_samples.
class RecordedNoise final : public NoiseSource {
public:
    explicit RecordedNoise(std::vector<Matrix> steps) : steps_(std::move(steps)) {}
    void draw(std::size_t step, std::span<const std::size_t> samples, Matrix& out) const override;

private:
    std::vector<Matrix> steps_;
};

double counter_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t sample,
                      std::uint64_t step, std::uint64_t channel);

}  // namespace mmfbsde::core
