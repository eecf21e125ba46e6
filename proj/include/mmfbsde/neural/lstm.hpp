#pragma once

// Two-layer LSTM stack with an affine read-out, written once against the
// autodiff engine interface so the same code runs on a tape (training) or
// directly on values (evaluation).
//
// Gate rows of W, U and b are stacked in the fixed order
//   [input; forget; cell-candidate; output], h rows each.

#include "mmfbsde/autodiff/engine.hpp"

#include <cstdint>
#include <random>
#include <utility>

namespace mmfbsde::nn {

struct LstmLayerParams {
    Matrix input_weights;      // 4h × d
    Matrix recurrent_weights;  // 4h × h
    Matrix bias;               // 4h × 1

    std::size_t hidden() const { return recurrent_weights.cols(); }
    std::size_t input() const { return input_weights.cols(); }
    void validate() const;
};

struct NetConfig {
    std::size_t state_dim = 0;
    std::size_t hidden1 = 16;
    std::size_t hidden2 = 16;
    std::size_t out_dim = 0;
    double forget_bias = 1.0;
};

struct NetParams {
    LstmLayerParams layer1;
    LstmLayerParams layer2;
    Matrix out_weights;  // m × h2
    Matrix out_bias;     // m × 1

    void validate() const;
};

// Uniform Glorot draw on [-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))].
Matrix xavier_init(std::size_t rows, std::size_t cols, std::mt19937_64& rng);

// Xavier weights; biases zero except the forget-gate block.
NetParams init_net(const NetConfig& cfg, std::mt19937_64& rng);

template <class V>
struct LayerHandles {
    V w, u, b;
};

template <class V>
struct NetHandles {
    LayerHandles<V> layer1, layer2;
    V out_w, out_b;
};

template <class V>
struct CellState {
    V h, c;
};

template <class V>
struct StackState {
    CellState<V> layer1, layer2;
};

template <ad::Engine E>
NetHandles<typename E::Value> bind_constant(E& eng, const NetParams& p) {
    auto layer = [&](const LstmLayerParams& l) {
        return LayerHandles<typename E::Value>{eng.constant(l.input_weights),
                                               eng.constant(l.recurrent_weights),
                                               eng.constant(l.bias)};
    };
    return {layer(p.layer1), layer(p.layer2), eng.constant(p.out_weights), eng.constant(p.out_bias)};
}

template <ad::Engine E>
StackState<typename E::Value> zero_state(E& eng, const NetParams& p, std::size_t batch) {
    auto cell = [&](std::size_t h) {
        return CellState<typename E::Value>{eng.constant(Matrix(h, batch)),
                                            eng.constant(Matrix(h, batch))};
    };
    return {cell(p.layer1.hidden()), cell(p.layer2.hidden())};
}

// One LSTM step on a batch (one sample per column). `ones` is a 1×batch row
// used to broadcast the bias.
template <ad::Engine E, class V = typename E::Value>
CellState<V> lstm_cell_forward(E& eng, const LayerHandles<V>& p, const V& x, const CellState<V>& prev,
                               const V& ones) {
    const std::size_t h = eng.value(p.u).cols();
    if (eng.value(x).rows() != eng.value(p.w).cols() || eng.value(prev.h).rows() != h ||
        eng.value(prev.c).rows() != h) {
        throw ad::ShapeError("lstm_cell_forward: input " + to_string(eng.value(x).shape()) +
                             ", hidden " + to_string(eng.value(prev.h).shape()) + ", cell " +
                             to_string(eng.value(prev.c).shape()) + " do not match layer with W " +
                             to_string(eng.value(p.w).shape()));
    }
    V pre = eng.add(eng.add(eng.matmul(p.w, x), eng.matmul(p.u, prev.h)), eng.matmul(p.b, ones));
    V i = eng.sigmoid(eng.slice_rows(pre, 0, h));
    V f = eng.sigmoid(eng.slice_rows(pre, h, h));
    V g = eng.tanh(eng.slice_rows(pre, 2 * h, h));
    V o = eng.sigmoid(eng.slice_rows(pre, 3 * h, h));
    V c = eng.add(eng.mul(f, prev.c), eng.mul(i, g));
    V hn = eng.mul(o, eng.tanh(c));
    return {std::move(hn), std::move(c)};
}

// Layer 1, layer 2, then the affine read-out. Returns the predicted value
// gradient and the carried state.
template <ad::Engine E, class V = typename E::Value>
std::pair<V, StackState<V>> lstm_stack_forward(E& eng, const NetHandles<V>& net, const V& x,
                                               const StackState<V>& state, const V& ones) {
    CellState<V> s1 = lstm_cell_forward(eng, net.layer1, x, state.layer1, ones);
    CellState<V> s2 = lstm_cell_forward(eng, net.layer2, s1.h, state.layer2, ones);
    V z = eng.add(eng.matmul(net.out_w, s2.h), eng.matmul(net.out_b, ones));
    return {std::move(z), StackState<V>{std::move(s1), std::move(s2)}};
}

// Single-sample convenience forms on plain vectors.
std::pair<std::vector<double>, std::vector<double>> lstm_cell_forward(
    const LstmLayerParams& p, std::span<const double> x, std::span<const double> h_prev,
    std::span<const double> c_prev);

}  // namespace mmfbsde::nn
