#pragma once

#include "mmfbsde/neural/adam.hpp"
#include "mmfbsde/neural/lstm.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace mmfbsde::train {

// Every trainable value in one flat vector: the network weights θ
// (regularised) followed by the initial value ψ = (y0, z0) (not
// regularised), plus the optimizer moments for all of them.
struct ParamStore {
    nn::NetConfig net_config;
    nn::ParamLayout layout;
    std::vector<double> values;
    nn::AdamState adam;

    // Xavier-initialised θ from `init_seed`; ψ starts at zero.
    static ParamStore create(const nn::NetConfig& cfg, std::uint64_t init_seed,
                             const nn::AdamConfig& adam, std::optional<double> psi_learning_rate);
    static nn::ParamLayout make_layout(const nn::NetConfig& cfg, std::optional<double> psi_learning_rate);

    nn::NetParams net() const;
    void set_net(const nn::NetParams& p);
    double y0() const;
    std::vector<double> z0() const;
    void set_psi(double y0, std::span<const double> z0);
    double theta_norm2() const;
    bool all_finite() const;

    Matrix block(const nn::ParamBlock& b) const;
    void set_block(const nn::ParamBlock& b, const Matrix& m);

    friend bool operator==(const ParamStore& a, const ParamStore& b);
};

}  // namespace mmfbsde::train
