#include "mmfbsde/cli/grad_audit.hpp"

#include "mmfbsde/core/rollout.hpp"

#include <random>

namespace mmfbsde::cli {
namespace {

constexpr double kStep = 1e-4;

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Matrix m(r, c);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = n(rng);
    return m;
}

// `build(eng, inputs)` must return a 1×1 value; works on either engine.
template <class Build>
AuditItem audit(std::string name, const std::vector<Matrix>& inputs, Build build) {
    ad::Tape tape;
    ad::TapeEngine teng(tape);
    std::vector<ad::Var> vars;
    for (const auto& m : inputs) vars.push_back(teng.variable(m));
    const ad::Var out = build(teng, vars);
    const auto grads = tape.backward(out);

    std::vector<double> point, analytic;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const auto& g = grads[vars[k]];
        point.insert(point.end(), inputs[k].values().begin(), inputs[k].values().end());
        analytic.insert(analytic.end(), g.values().begin(), g.values().end());
    }
    auto f = [&](std::span<const double> p) {
        std::vector<Matrix> in = inputs;
        std::size_t off = 0;
        for (auto& m : in)
            for (std::size_t i = 0; i < m.size(); ++i) m[i] = p[off++];
        ad::ValueEngine veng;
        return build(veng, in)[0];
    };
    const auto rep = ad::finite_difference_check(f, analytic, point, kStep, ad::Stencil::CentralFourth);
    return {std::move(name), point.size(), rep.max_relative_error, rep.worst_index,
            rep.max_relative_error < kAuditTolerance};
}

// Σ C ∘ v, turning a matrix output into a scalar with a generic adjoint.
template <class E, class V>
V weigh(E& eng, const V& v, const Matrix& c) {
    return eng.sum(eng.mul(v, eng.constant(c)));
}

}  // namespace

std::vector<AuditItem> gradient_audit(const ExperimentConfig& cfg, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<AuditItem> items;
    auto rnd = [&](std::size_t r, std::size_t c) { return random_matrix(r, c, rng); };

    {
        const Matrix c = rnd(3, 2);
        items.push_back(audit("primitive/matrix-multiply", {rnd(3, 4), rnd(4, 2)},
                              [&](auto& e, const auto& in) { return weigh(e, e.matmul(in[0], in[1]), c); }));
    }
    {
        const Matrix c = rnd(3, 2);
        items.push_back(audit("primitive/add", {rnd(3, 2), rnd(3, 2)},
                              [&](auto& e, const auto& in) { return weigh(e, e.add(in[0], in[1]), c); }));
        items.push_back(audit("primitive/subtract", {rnd(3, 2), rnd(3, 2)},
                              [&](auto& e, const auto& in) { return weigh(e, e.sub(in[0], in[1]), c); }));
        items.push_back(audit("primitive/element-multiply", {rnd(3, 2), rnd(3, 2)},
                              [&](auto& e, const auto& in) { return weigh(e, e.mul(in[0], in[1]), c); }));
        items.push_back(audit("primitive/scalar-multiply", {rnd(3, 2)},
                              [&](auto& e, const auto& in) { return weigh(e, e.scale(in[0], -1.7), c); }));
        items.push_back(audit("primitive/tanh", {rnd(3, 2)},
                              [&](auto& e, const auto& in) { return weigh(e, e.tanh(in[0]), c); }));
        items.push_back(audit("primitive/sigmoid", {rnd(3, 2)},
                              [&](auto& e, const auto& in) { return weigh(e, e.sigmoid(in[0]), c); }));
        items.push_back(audit("primitive/sum", {rnd(3, 2)},
                              [&](auto& e, const auto& in) { return e.scale(e.sum(in[0]), 1.3); }));
        items.push_back(audit("primitive/sum-of-squares", {rnd(3, 2)},
                              [&](auto& e, const auto& in) { return e.sum_of_squares(in[0]); }));
    }
    {
        const Matrix c = rnd(3, 2);
        items.push_back(audit("primitive/concat-rows", {rnd(2, 2), rnd(1, 2)}, [&](auto& e, const auto& in) {
            const std::vector<std::decay_t<decltype(in[0])>> parts{in[0], in[1]};
            return weigh(e, e.concat_rows(parts), c);
        }));
    }
    {
        const Matrix c = rnd(2, 3);
        items.push_back(audit("primitive/slice-rows", {rnd(4, 3)},
                              [&](auto& e, const auto& in) { return weigh(e, e.slice_rows(in[0], 1, 2), c); }));
    }
    {
        auto pendulum = sys::make_system("pendulum", sys::default_physics("pendulum"), 0.1);
        const core::DriftMap drift(*pendulum, 0.0);
        const Matrix c = rnd(2, 3);
        items.push_back(audit("primitive/column-map", {rnd(2, 3)},
                              [&](auto& e, const auto& in) { return weigh(e, e.column_map(in[0], drift), c); }));
    }
    {
        // One LSTM step: W, U, b, x, h_prev, c_prev.
        const std::size_t d = 3, h = 4, batch = 2;
        const Matrix ch = rnd(h, batch), cc = rnd(h, batch);
        items.push_back(audit("lstm/cell-step",
                              {random_matrix(4 * h, d, rng, 0.5), random_matrix(4 * h, h, rng, 0.5),
                               random_matrix(4 * h, 1, rng, 0.5), rnd(d, batch), rnd(h, batch), rnd(h, batch)},
                              [&](auto& e, const auto& in) {
                                  using V = std::decay_t<decltype(in[0])>;
                                  const nn::LayerHandles<V> p{in[0], in[1], in[2]};
                                  const V ones = e.constant(Matrix(1, batch, 1.0));
                                  const auto next = nn::lstm_cell_forward(e, p, in[3], nn::CellState<V>{in[4], in[5]}, ones);
                                  return e.add(weigh(e, next.h, ch), weigh(e, next.c, cc));
                              }));
    }
    {
        // Training loss of a short rollout with respect to θ and ψ.
        ExperimentConfig short_cfg = cfg;
        const double dt = (cfg.horizon.horizon - cfg.horizon.t0) / static_cast<double>(cfg.horizon.steps);
        short_cfg.horizon.steps = 5;
        short_cfg.horizon.horizon = cfg.horizon.t0 + 5.0 * dt;
        const auto exp = Experiment::build(short_cfg);
        const auto ctx = exp->context(true);
        auto store = exp->initial_store();
        std::normal_distribution<double> n(0.0, 1.0);
        std::vector<double> z0(exp->system->noise_dim());
        for (auto& z : z0) z = n(rng);
        store.set_psi(n(rng), z0);
        const core::CounterNoise noise(seed, 1);
        const std::size_t batch = 2;
        const auto lg = train::loss_and_gradient(store, ctx, noise, batch, batch);
        auto f = [&](std::span<const double> p) {
            train::ParamStore s = store;
            s.values.assign(p.begin(), p.end());
            return train::loss_value(s, ctx, noise, batch);
        };
        const auto rep = ad::finite_difference_check(f, lg.grad, store.values, kStep, ad::Stencil::CentralFourth);
        items.push_back({"rollout/" + cfg.system + "-5-step-loss", store.values.size(), rep.max_relative_error,
                         rep.worst_index, rep.max_relative_error < kAuditTolerance});
    }
    return items;
}

nlohmann::json audit_json(const std::vector<AuditItem>& items) {
    nlohmann::json rows = nlohmann::json::array();
    bool all = true;
    double worst = 0.0;
    for (const auto& it : items) {
        rows.push_back({{"name", it.name},
                        {"parameters", it.parameters},
                        {"max_relative_error", it.max_relative_error},
                        {"worst_index", it.worst_index},
                        {"passed", it.passed}});
        all = all && it.passed;
        worst = std::max(worst, it.max_relative_error);
    }
    return {{"schema", "mmfbsde-grad-check/1"},
            {"tolerance", kAuditTolerance},
            {"max_relative_error", worst},
            {"passed", all},
            {"items", rows}};
}

}  // namespace mmfbsde::cli
