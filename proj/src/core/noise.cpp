#include "mmfbsde/core/noise.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mmfbsde::core {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Uniform on (0, 1].
double to_unit(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

}  // namespace

double counter_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t sample,
                      std::uint64_t step, std::uint64_t channel) {
    std::uint64_t key = splitmix64(seed);
    key = splitmix64(key ^ stream);
    key = splitmix64(key ^ sample);
    key = splitmix64(key ^ step);
    key = splitmix64(key ^ channel);
    const double u1 = to_unit(splitmix64(key ^ 0x1ULL));
    const double u2 = to_unit(splitmix64(key ^ 0x2ULL));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void CounterNoise::draw(std::size_t step, std::span<const std::size_t> samples, Matrix& out) const {
    if (out.cols() != samples.size()) throw std::invalid_argument("CounterNoise: column count mismatch");
    for (std::size_t c = 0; c < out.rows(); ++c)
        for (std::size_t j = 0; j < samples.size(); ++j)
            out(c, j) = counter_normal(seed_, stream_, samples[j], step, c);
}

void RecordedNoise::draw(std::size_t step, std::span<const std::size_t> samples, Matrix& out) const {
    const Matrix& src = steps_.at(step);
    if (src.rows() != out.rows() || out.cols() != samples.size()) {
        throw std::invalid_argument("RecordedNoise: shape mismatch");
    }
    for (std::size_t c = 0; c < out.rows(); ++c)
        for (std::size_t j = 0; j < samples.size(); ++j) out(c, j) = src(c, samples[j]);
}

}  // namespace mmfbsde::core
