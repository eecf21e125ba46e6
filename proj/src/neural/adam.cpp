#include "mmfbsde/neural/adam.hpp"

#include <cmath>

namespace mmfbsde::nn {

const ParamBlock& ParamLayout::add(std::string name, Shape shape, bool regularized,
                                   std::optional<double> learning_rate) {
    for (const auto& b : blocks_) {
        if (b.name == name) throw std::invalid_argument("ParamLayout: duplicate block '" + name + "'");
    }
    blocks_.push_back({std::move(name), shape, total_, regularized, learning_rate});
    total_ += shape.size();
    return blocks_.back();
}

const ParamBlock& ParamLayout::find(std::string_view name) const {
    for (const auto& b : blocks_) {
        if (b.name == name) return b;
    }
    throw std::out_of_range("ParamLayout: no block named '" + std::string(name) + "'");
}

const std::string& ParamLayout::owner(std::size_t i) const {
    for (const auto& b : blocks_) {
        if (i >= b.offset && i < b.offset + b.shape.size()) return b.name;
    }
    throw std::out_of_range("ParamLayout: index out of range");
}

bool operator==(const ParamLayout& a, const ParamLayout& b) {
    if (a.total_ != b.total_ || a.blocks_.size() != b.blocks_.size()) return false;
    for (std::size_t i = 0; i < a.blocks_.size(); ++i) {
        const auto& x = a.blocks_[i];
        const auto& y = b.blocks_[i];
        if (x.name != y.name || x.shape != y.shape || x.offset != y.offset) return false;
    }
    return true;
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
               const ParamLayout* layout) {
    const std::size_t n = params.size();
    if (grads.size() != n || state.m.size() != n || state.v.size() != n) {
        throw std::invalid_argument("adam_step: params/grads/moments sizes differ");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(grads[i])) {
            throw NonFiniteGradient(layout ? layout->owner(i) : std::string("param"), i);
        }
    }

    const auto& c = state.config;
    state.t += 1;
    const double t = static_cast<double>(state.t);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);

    auto update = [&](std::size_t begin, std::size_t end, double lr) {
        for (std::size_t i = begin; i < end; ++i) {
            const double g = grads[i];
            state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g;
            state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g * g;
            const double mhat = state.m[i] / bc1;
            const double vhat = state.v[i] / bc2;
            params[i] -= lr * mhat / (std::sqrt(vhat) + c.epsilon);
        }
    };

    if (!layout) {
        update(0, n, c.learning_rate);
        return;
    }
    for (const auto& b : layout->blocks()) {
        update(b.offset, b.offset + b.shape.size(), b.learning_rate.value_or(c.learning_rate));
    }
}

}  // namespace mmfbsde::nn
