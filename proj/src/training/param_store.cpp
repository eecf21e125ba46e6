#include "mmfbsde/training/param_store.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace mmfbsde::train {

nn::ParamLayout ParamStore::make_layout(const nn::NetConfig& cfg, std::optional<double> psi_lr) {
    nn::ParamLayout layout;
    const std::size_t h1 = cfg.hidden1, h2 = cfg.hidden2;
    layout.add("layer1.W", {4 * h1, cfg.state_dim}, true);
    layout.add("layer1.U", {4 * h1, h1}, true);
    layout.add("layer1.b", {4 * h1, 1}, true);
    layout.add("layer2.W", {4 * h2, h1}, true);
    layout.add("layer2.U", {4 * h2, h2}, true);
    layout.add("layer2.b", {4 * h2, 1}, true);
    layout.add("out.W", {cfg.out_dim, h2}, true);
    layout.add("out.b", {cfg.out_dim, 1}, true);
    layout.add("psi.y0", {1, 1}, false, psi_lr);
    layout.add("psi.z0", {cfg.out_dim, 1}, false, psi_lr);
    return layout;
}

ParamStore ParamStore::create(const nn::NetConfig& cfg, std::uint64_t init_seed,
                              const nn::AdamConfig& adam, std::optional<double> psi_lr) {
    ParamStore s;
    s.net_config = cfg;
    s.layout = make_layout(cfg, psi_lr);
    s.values.assign(s.layout.total(), 0.0);
    s.adam = nn::AdamState(s.layout.total(), adam);
    std::mt19937_64 rng(init_seed);
    s.set_net(nn::init_net(cfg, rng));
    return s;
}

Matrix ParamStore::block(const nn::ParamBlock& b) const {
    Matrix m(b.shape);
    std::copy(values.begin() + static_cast<std::ptrdiff_t>(b.offset),
              values.begin() + static_cast<std::ptrdiff_t>(b.offset + b.shape.size()), m.data());
    return m;
}

void ParamStore::set_block(const nn::ParamBlock& b, const Matrix& m) {
    if (m.shape() != b.shape) {
        throw std::invalid_argument("ParamStore: block '" + b.name + "' expects " + to_string(b.shape) +
                                    ", got " + to_string(m.shape()));
    }
    std::copy(m.data(), m.data() + m.size(), values.begin() + static_cast<std::ptrdiff_t>(b.offset));
}

nn::NetParams ParamStore::net() const {
    nn::NetParams p;
    p.layer1.input_weights = block(layout.find("layer1.W"));
    p.layer1.recurrent_weights = block(layout.find("layer1.U"));
    p.layer1.bias = block(layout.find("layer1.b"));
    p.layer2.input_weights = block(layout.find("layer2.W"));
    p.layer2.recurrent_weights = block(layout.find("layer2.U"));
    p.layer2.bias = block(layout.find("layer2.b"));
    p.out_weights = block(layout.find("out.W"));
    p.out_bias = block(layout.find("out.b"));
    return p;
}

void ParamStore::set_net(const nn::NetParams& p) {
    p.validate();
    set_block(layout.find("layer1.W"), p.layer1.input_weights);
    set_block(layout.find("layer1.U"), p.layer1.recurrent_weights);
    set_block(layout.find("layer1.b"), p.layer1.bias);
    set_block(layout.find("layer2.W"), p.layer2.input_weights);
    set_block(layout.find("layer2.U"), p.layer2.recurrent_weights);
    set_block(layout.find("layer2.b"), p.layer2.bias);
    set_block(layout.find("out.W"), p.out_weights);
    set_block(layout.find("out.b"), p.out_bias);
}

double ParamStore::y0() const { return values[layout.find("psi.y0").offset]; }

std::vector<double> ParamStore::z0() const { return block(layout.find("psi.z0")).column_values(0); }

void ParamStore::set_psi(double y, std::span<const double> z) {
    values[layout.find("psi.y0").offset] = y;
    set_block(layout.find("psi.z0"), Matrix::column(z));
}

double ParamStore::theta_norm2() const {
    double s = 0.0;
    for (const auto& b : layout.blocks()) {
        if (!b.regularized) continue;
        for (std::size_t i = b.offset; i < b.offset + b.shape.size(); ++i) s += values[i] * values[i];
    }
    return s;
}

bool ParamStore::all_finite() const {
    for (double v : values)
        if (!std::isfinite(v)) return false;
    return true;
}

bool operator==(const ParamStore& a, const ParamStore& b) {
    return a.layout == b.layout && a.values == b.values && a.adam.m == b.adam.m &&
           a.adam.v == b.adam.v && a.adam.t == b.adam.t;
}

}  // namespace mmfbsde::train
