#pragma once

#include "mmfbsde/autodiff/matrix.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmfbsde::nn {

// Named slice of a flat parameter vector.
struct ParamBlock {
    std::string name;
    Shape shape;
    std::size_t offset = 0;
    bool regularized = true;
    // Overrides the optimizer learning rate for this block.
    std::optional<double> learning_rate;
};

class ParamLayout {
public:
    const ParamBlock& add(std::string name, Shape shape, bool regularized,
                          std::optional<double> learning_rate = std::nullopt);

    const std::vector<ParamBlock>& blocks() const { return blocks_; }
    std::size_t total() const { return total_; }
    const ParamBlock& find(std::string_view name) const;
    // Name of the block containing flat index `i`.
    const std::string& owner(std::size_t i) const;

    friend bool operator==(const ParamLayout& a, const ParamLayout& b);

private:
    std::vector<ParamBlock> blocks_;
    std::size_t total_ = 0;
};

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    AdamConfig config;
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t t = 0;

    AdamState() = default;
    AdamState(std::size_t n, AdamConfig cfg) : config(cfg), m(n, 0.0), v(n, 0.0) {}
};

class NonFiniteGradient : public std::runtime_error {
public:
    NonFiniteGradient(const std::string& param, std::size_t index)
        : std::runtime_error("non-finite gradient in parameter '" + param + "' (flat index " +
                             std::to_string(index) + ")"),
          param_(param) {}
    const std::string& param() const { return param_; }

private:
    std::string param_;
};

// Bias-corrected Adam update in place. Throws NonFiniteGradient, leaving
// params and state untouched, if any gradient entry is non-finite.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
               const ParamLayout* layout = nullptr);

}  // namespace mmfbsde::nn
