#include "mmfbsde/neural/lstm.hpp"

#include <cmath>
#include <stdexcept>

namespace mmfbsde::nn {

void LstmLayerParams::validate() const {
    const std::size_t h = recurrent_weights.cols();
    if (h == 0 || recurrent_weights.rows() != 4 * h || input_weights.rows() != 4 * h ||
        bias.rows() != 4 * h || bias.cols() != 1) {
        throw std::invalid_argument("LstmLayerParams: W " + to_string(input_weights.shape()) + ", U " +
                                    to_string(recurrent_weights.shape()) + ", b " +
                                    to_string(bias.shape()) + " are not a 4h-row gate stack");
    }
}

void NetParams::validate() const {
    layer1.validate();
    layer2.validate();
    if (layer2.input() != layer1.hidden()) {
        throw std::invalid_argument("NetParams: layer2 input size " + std::to_string(layer2.input()) +
                                    " != layer1 hidden size " + std::to_string(layer1.hidden()));
    }
    if (out_weights.cols() != layer2.hidden() || out_bias.rows() != out_weights.rows() ||
        out_bias.cols() != 1) {
        throw std::invalid_argument("NetParams: output map " + to_string(out_weights.shape()) + " + " +
                                    to_string(out_bias.shape()) + " does not read layer2 hidden size " +
                                    std::to_string(layer2.hidden()));
    }
}

Matrix xavier_init(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-a, a);
    Matrix m(rows, cols);
    for (auto& v : m.values()) v = dist(rng);
    return m;
}

NetParams init_net(const NetConfig& cfg, std::mt19937_64& rng) {
    if (cfg.state_dim == 0 || cfg.hidden1 == 0 || cfg.hidden2 == 0 || cfg.out_dim == 0) {
        throw std::invalid_argument("init_net: all dimensions must be >= 1");
    }
    auto layer = [&](std::size_t d, std::size_t h) {
        LstmLayerParams l;
        l.input_weights = xavier_init(4 * h, d, rng);
        l.recurrent_weights = xavier_init(4 * h, h, rng);
        l.bias = Matrix(4 * h, 1);
        for (std::size_t r = h; r < 2 * h; ++r) l.bias(r, 0) = cfg.forget_bias;
        return l;
    };
    NetParams p;
    p.layer1 = layer(cfg.state_dim, cfg.hidden1);
    p.layer2 = layer(cfg.hidden1, cfg.hidden2);
    p.out_weights = xavier_init(cfg.out_dim, cfg.hidden2, rng);
    p.out_bias = Matrix(cfg.out_dim, 1);
    return p;
}

std::pair<std::vector<double>, std::vector<double>> lstm_cell_forward(
    const LstmLayerParams& p, std::span<const double> x, std::span<const double> h_prev,
    std::span<const double> c_prev) {
    p.validate();
    ad::ValueEngine eng;
    LayerHandles<Matrix> handles{p.input_weights, p.recurrent_weights, p.bias};
    CellState<Matrix> prev{Matrix::column(h_prev), Matrix::column(c_prev)};
    CellState<Matrix> next = lstm_cell_forward(eng, handles, Matrix::column(x), prev, Matrix(1, 1, 1.0));
    return {next.h.column_values(0), next.c.column_values(0)};
}

}  // namespace mmfbsde::nn
