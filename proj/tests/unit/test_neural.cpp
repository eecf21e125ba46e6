#include "mmfbsde/autodiff/tape.hpp"
#include "mmfbsde/neural/adam.hpp"
#include "mmfbsde/neural/lstm.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace mmfbsde;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Straight-line LSTM cell on plain vectors, written from the cell equations.
void hand_cell(const nn::LstmLayerParams& p, const std::vector<double>& x, std::vector<double>& h,
               std::vector<double>& c) {
    const std::size_t n = p.hidden(), d = p.input();
    std::vector<double> pre(4 * n);
    for (std::size_t r = 0; r < 4 * n; ++r) {
        double s = p.bias(r, 0);
        for (std::size_t j = 0; j < d; ++j) s += p.input_weights(r, j) * x[j];
        for (std::size_t j = 0; j < n; ++j) s += p.recurrent_weights(r, j) * h[j];
        pre[r] = s;
    }
    for (std::size_t j = 0; j < n; ++j) {
        const double i = sig(pre[j]), f = sig(pre[n + j]), g = std::tanh(pre[2 * n + j]), o = sig(pre[3 * n + j]);
        c[j] = f * c[j] + i * g;
        h[j] = o * std::tanh(c[j]);
    }
}

nn::NetParams random_net(std::mt19937_64& rng, std::size_t d, std::size_t h1, std::size_t h2, std::size_t m) {
    nn::NetParams p = nn::init_net({d, h1, h2, m, 1.0}, rng);
    std::normal_distribution<double> n(0.0, 0.5);
    for (auto* b : {&p.layer1.bias, &p.layer2.bias, &p.out_bias})
        for (std::size_t i = 0; i < b->size(); ++i) (*b)[i] = n(rng);
    return p;
}

std::vector<Matrix> run_stack(const nn::NetParams& p, const std::vector<Matrix>& xs) {
    ad::ValueEngine e;
    const auto net = nn::bind_constant(e, p);
    auto state = nn::zero_state(e, p, xs[0].cols());
    const Matrix ones(1, xs[0].cols(), 1.0);
    std::vector<Matrix> out;
    for (const auto& x : xs) {
        auto [z, next] = nn::lstm_stack_forward(e, net, x, state, ones);
        out.push_back(z);
        state = next;
    }
    return out;
}

}  // namespace

TEST_CASE("xavier initialization") {
    std::mt19937_64 rng(1);
    const Matrix one = nn::xavier_init(1, 1, rng);
    CHECK(std::abs(one[0]) <= std::sqrt(3.0));
    const Matrix big = nn::xavier_init(100, 100, rng);
    double mean = 0.0, var = 0.0;
    for (double v : big.values()) mean += v;
    mean /= static_cast<double>(big.size());
    for (double v : big.values()) var += (v - mean) * (v - mean);
    var /= static_cast<double>(big.size() - 1);
    CHECK(var == doctest::Approx(0.01).epsilon(0.2));
    std::mt19937_64 a(42), b(42);
    CHECK(nn::xavier_init(5, 7, a) == nn::xavier_init(5, 7, b));
}

TEST_CASE("init_net biases") {
    std::mt19937_64 rng(2);
    const auto p = nn::init_net({2, 3, 4, 1, 1.0}, rng);
    for (std::size_t r = 0; r < 12; ++r) CHECK(p.layer1.bias(r, 0) == (r >= 3 && r < 6 ? 1.0 : 0.0));
    CHECK(p.layer2.input_weights.shape() == Shape{16, 3});
    CHECK(p.out_weights.shape() == Shape{1, 4});
    CHECK_THROWS(nn::init_net({0, 3, 4, 1, 1.0}, rng));
}

TEST_CASE("single-sample lstm cell") {
    nn::LstmLayerParams zero{Matrix(4, 1), Matrix(4, 1), Matrix(4, 1)};
    const double x[] = {0.7};
    const double h0[] = {0.0};
    const double c0[] = {0.0};
    auto [h, c] = nn::lstm_cell_forward(zero, x, h0, c0);
    CHECK(h[0] == 0.0);
    CHECK(c[0] == 0.0);
    const double c2[] = {2.0};
    auto [h2, c2n] = nn::lstm_cell_forward(zero, x, h0, c2);
    CHECK(c2n[0] == doctest::Approx(1.0));
    CHECK(h2[0] == doctest::Approx(0.5 * std::tanh(1.0)));
    CHECK(h2[0] == doctest::Approx(0.380797).epsilon(1e-6));
    const double bad[] = {1.0, 2.0};
    CHECK_THROWS_AS(nn::lstm_cell_forward(zero, bad, h0, c0), ad::ShapeError);
}

TEST_CASE("lstm hidden output stays inside (-1, 1)") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 5.0);
    for (int trial = 0; trial < 200; ++trial) {
        nn::LstmLayerParams p{Matrix(12, 2), Matrix(12, 3), Matrix(12, 1)};
        for (auto* m : {&p.input_weights, &p.recurrent_weights, &p.bias})
            for (std::size_t i = 0; i < m->size(); ++i) (*m)[i] = n(rng);
        const double x[] = {n(rng), n(rng)};
        const double h[] = {0.3, -0.2, 0.9};
        const double c[] = {n(rng), n(rng), n(rng)};
        for (double v : nn::lstm_cell_forward(p, x, h, c).first) CHECK(std::abs(v) < 1.0);
    }
}

TEST_CASE("lstm stack passthrough cases") {
    nn::NetParams p{{Matrix(8, 2), Matrix(8, 2), Matrix(8, 1)},
                    {Matrix(8, 2), Matrix(8, 2), Matrix(8, 1)},
                    Matrix(2, 2),
                    Matrix(2, 1)};
    const Matrix x = Matrix::from_rows({{0.4}, {-1.2}});
    CHECK(run_stack(p, {x})[0] == Matrix(2, 1));
    p.out_bias = Matrix::from_rows({{1}, {2}});
    CHECK(run_stack(p, {x})[0] == Matrix::from_rows({{1}, {2}}));
    CHECK_THROWS_AS(run_stack(p, {Matrix(3, 1)}), ad::ShapeError);
}

TEST_CASE("lstm stack matches a hand trace over several steps") {
    std::mt19937_64 rng(8);
    const auto p = random_net(rng, 3, 4, 5, 2);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<Matrix> xs;
    for (int k = 0; k < 6; ++k) xs.push_back(Matrix::from_rows({{n(rng)}, {n(rng)}, {n(rng)}}));
    const auto zs = run_stack(p, xs);
    std::vector<double> h1(4, 0.0), c1(4, 0.0), h2(5, 0.0), c2(5, 0.0);
    for (std::size_t k = 0; k < xs.size(); ++k) {
        hand_cell(p.layer1, {xs[k][0], xs[k][1], xs[k][2]}, h1, c1);
        hand_cell(p.layer2, h1, h2, c2);
        for (std::size_t r = 0; r < 2; ++r) {
            double z = p.out_bias(r, 0);
            for (std::size_t j = 0; j < 5; ++j) z += p.out_weights(r, j) * h2[j];
            CHECK(zs[k](r, 0) == doctest::Approx(z).epsilon(1e-12));
        }
    }
}

TEST_CASE("lstm state depends only on the input prefix") {
    std::mt19937_64 rng(10);
    const auto p = random_net(rng, 2, 3, 3, 1);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<Matrix> xs;
    for (int k = 0; k < 8; ++k) xs.push_back(Matrix::from_rows({{n(rng), n(rng)}, {n(rng), n(rng)}}));
    const auto full = run_stack(p, xs);
    for (std::size_t len = 1; len <= xs.size(); ++len) {
        const auto part = run_stack(p, std::vector<Matrix>(xs.begin(), xs.begin() + static_cast<long>(len)));
        for (std::size_t k = 0; k < len; ++k) CHECK(part[k] == full[k]);
    }
    // Columns are independent samples.
    std::vector<Matrix> first;
    for (const auto& x : xs) first.push_back(Matrix::from_rows({{x(0, 0)}, {x(1, 0)}}));
    const auto single = run_stack(p, first);
    for (std::size_t k = 0; k < xs.size(); ++k) CHECK(single[k][0] == doctest::Approx(full[k](0, 0)).epsilon(1e-14));
}

TEST_CASE("stack readout gradient matches finite differences for every weight matrix") {
    std::mt19937_64 rng(12);
    const auto p = random_net(rng, 2, 3, 3, 2);
    const Matrix x1 = Matrix::from_rows({{0.3, -0.8}, {1.1, 0.2}});
    const Matrix x2 = Matrix::from_rows({{-0.5, 0.4}, {0.9, -1.3}});
    const Matrix readout = Matrix::from_rows({{0.7, -0.2}, {0.4, 1.5}});
    auto build = [&](auto& e, const std::vector<typename std::decay_t<decltype(e)>::Value>& in) {
        using V = typename std::decay_t<decltype(e)>::Value;
        nn::NetHandles<V> net{{in[0], in[1], in[2]}, {in[3], in[4], in[5]}, in[6], in[7]};
        const V ones = e.constant(Matrix(1, 2, 1.0));
        nn::StackState<V> s{{e.constant(Matrix(3, 2)), e.constant(Matrix(3, 2))},
                            {e.constant(Matrix(3, 2)), e.constant(Matrix(3, 2))}};
        auto [z1, s1] = nn::lstm_stack_forward(e, net, e.constant(x1), s, ones);
        auto [z2, s2] = nn::lstm_stack_forward(e, net, e.constant(x2), s1, ones);
        return e.sum(e.mul(e.add(z1, z2), e.constant(readout)));
    };
    const std::vector<Matrix> inputs{p.layer1.input_weights, p.layer1.recurrent_weights, p.layer1.bias,
                                     p.layer2.input_weights, p.layer2.recurrent_weights, p.layer2.bias,
                                     p.out_weights,          p.out_bias};
    ad::Tape tape;
    ad::TapeEngine te(tape);
    std::vector<ad::Var> vars;
    for (const auto& m : inputs) vars.push_back(te.variable(m));
    const auto g = tape.backward(build(te, vars));
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        auto f = [&](std::span<const double> pt) {
            auto in = inputs;
            for (std::size_t i = 0; i < in[k].size(); ++i) in[k][i] = pt[i];
            ad::ValueEngine ve;
            return build(ve, in)[0];
        };
        const auto rep = ad::finite_difference_check(f, g[vars[k]].values(), inputs[k].values(), 1e-6);
        CHECK_MESSAGE(rep.max_relative_error < 1e-5, "matrix " << k);
    }
}

TEST_CASE("adam step") {
    nn::AdamState fresh(3, {});
    std::vector<double> params{1.0, -2.0, 3.0};
    const std::vector<double> zero(3, 0.0);
    nn::adam_step(fresh, params, zero);
    CHECK(params == std::vector<double>{1.0, -2.0, 3.0});

    nn::AdamState s(1, {});
    std::vector<double> x{0.0};
    const std::vector<double> one{1.0};
    nn::adam_step(s, x, one);
    CHECK(s.t == 1);
    CHECK(x[0] == doctest::Approx(-0.001 / (1.0 + 1e-8)).epsilon(1e-12));
    CHECK(x[0] == doctest::Approx(-0.000999999).epsilon(1e-6));

    nn::AdamState a(2, {}), b(2, {});
    std::vector<double> pa{0.5, 0.25}, pb{0.5, 0.25};
    const std::vector<double> g{0.3, -7.0};
    for (int i = 0; i < 5; ++i) {
        nn::adam_step(a, pa, g);
        nn::adam_step(b, pb, g);
    }
    CHECK(pa == pb);

    nn::AdamConfig frozen;
    frozen.learning_rate = 0.0;
    nn::AdamState z(2, frozen);
    std::vector<double> pz{0.5, 0.25};
    for (int i = 0; i < 3; ++i) nn::adam_step(z, pz, g);
    CHECK(pz == std::vector<double>{0.5, 0.25});
}

TEST_CASE("adam rejects non-finite gradients and names the parameter") {
    nn::ParamLayout layout;
    layout.add("w", {1, 2}, true);
    layout.add("b", {1, 1}, false, 0.1);
    CHECK(layout.total() == 3);
    CHECK(layout.owner(2) == "b");
    nn::AdamState s(3, {});
    std::vector<double> p{1.0, 2.0, 3.0};
    const std::vector<double> g{0.1, 0.2, std::nan("")};
    try {
        nn::adam_step(s, p, g, &layout);
        FAIL("expected NonFiniteGradient");
    } catch (const nn::NonFiniteGradient& e) {
        CHECK(e.param() == "b");
    }
    CHECK(p == std::vector<double>{1.0, 2.0, 3.0});
    CHECK(s.t == 0);
    // The per-block learning rate applies to b only.
    const std::vector<double> ones(3, 1.0);
    nn::adam_step(s, p, ones, &layout);
    CHECK(p[0] == doctest::Approx(1.0 - 0.001).epsilon(1e-9));
    CHECK(p[2] == doctest::Approx(3.0 - 0.1).epsilon(1e-9));
}
