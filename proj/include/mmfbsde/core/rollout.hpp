#pragma once

// Importance-sampled FBSDE rollout on a batch of samples (one per column).
//
// Per step n, with K = Γ_u u* + v* the drift shift applied by the nominal
// controls and w ~ N(0, I) the step's Brownian draw:
//
//   y_{n+1} = y_n − (h_n + z_nᵀ K) Δt + z_nᵀ w √Δt
//   x_{n+1} = x_n + f(x_n) Δt + Σ (K Δt + w √Δt)
//   z_{n+1} = predictor(x_{n+1})
//
// The rollout is written against the autodiff engine interface: on a
// TapeEngine the whole trajectory is differentiable, on a ValueEngine it is
// evaluated directly with identical arithmetic.

#include "mmfbsde/autodiff/engine.hpp"
#include "mmfbsde/core/controls.hpp"
#include "mmfbsde/core/grid.hpp"
#include "mmfbsde/core/noise.hpp"
#include "mmfbsde/neural/lstm.hpp"
#include "mmfbsde/systems/cost.hpp"
#include "mmfbsde/systems/system.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace mmfbsde::core {

struct RolloutConfig {
    const sys::SystemModel* system = nullptr;
    const sys::CostSpec* costs = nullptr;
    HorizonGrid grid;
    std::vector<double> initial_state;
    Mode mode = Mode::MinMax;
    // v* drives the forward SDE. Switched off at test time.
    bool adversary = true;
};

// Constant matrices shared by every step of a rollout.
class RolloutContext {
public:
    explicit RolloutContext(RolloutConfig cfg);

    const RolloutConfig& config() const { return cfg_; }
    const sys::SystemModel& system() const { return *cfg_.system; }
    const sys::CostSpec& costs() const { return *cfg_.costs; }
    const HorizonGrid& grid() const { return cfg_.grid; }
    const ControlLaw& law() const { return law_; }
    const Matrix& sigma() const { return sigma_; }
    bool adversary_active() const { return cfg_.adversary && cfg_.mode == Mode::MinMax; }

private:
    RolloutConfig cfg_;
    Matrix sigma_;
    ControlLaw law_;
};

template <class V>
struct RolloutRecord {
    std::vector<V> x;  // steps + 1 entries, n × M
    std::vector<V> y;  // steps + 1 entries, 1 × M
    std::vector<V> z;  // steps + 1 entries, m × M
    std::vector<V> u;  // steps entries, p × M
    std::vector<V> v;  // steps entries when the adversary is active, m × M
    std::vector<V> w;  // steps entries, m × M, standard normal draws
    V y_star;          // g(x_N), 1 × M
};

struct RolloutStats {
    std::size_t adversary_evaluations = 0;
};

// Drift f(·, t) as a column map.
class DriftMap final : public ad::ColumnFunction {
public:
    DriftMap(const sys::SystemModel& s, double t) : sys_(&s), t_(t) {}
    std::size_t out_dim() const override { return sys_->state_dim(); }
    void eval(std::span<const double> x, std::span<double> y) const override { sys_->drift(x, t_, y); }
    void eval_with_jacobian(std::span<const double> x, std::span<double> y,
                            std::span<double> jac) const override {
        sys_->drift_jacobian(x, t_, y, jac);
    }

private:
    const sys::SystemModel* sys_;
    double t_;
};

// ½ Σ_j w_j d_j² per column, d = x − target with angles wrapped. The wrap
// offset is piecewise constant, so it enters as a constant.
template <ad::Engine E, class V = typename E::Value>
V quadratic_cost(E& eng, const V& x, const std::vector<double>& weights, const sys::CostSpec& costs) {
    const Matrix& xv = eng.value(x);
    Matrix offset(xv.rows(), xv.cols());
    for (std::size_t r = 0; r < xv.rows(); ++r)
        for (std::size_t c = 0; c < xv.cols(); ++c) offset(r, c) = costs.target[r];
    for (auto r : costs.angle_states) {
        for (std::size_t c = 0; c < xv.cols(); ++c) {
            const double d = xv(r, c) - costs.target[r];
            if (std::isfinite(d)) offset(r, c) += d - sys::wrap_angle(d);
        }
    }
    Matrix w_row(1, weights.size());
    for (std::size_t j = 0; j < weights.size(); ++j) w_row(0, j) = weights[j];
    V dev = eng.sub(x, eng.constant(std::move(offset)));
    return eng.scale(eng.matmul(eng.constant(std::move(w_row)), eng.mul(dev, dev)), 0.5);
}

// x_{n+1} = x + f Δt + Σ (K Δt + w √Δt)
template <ad::Engine E, class V = typename E::Value>
V fsde_step(E& eng, const V& x, const V& f, const V& k, const V& w, const V& sigma, double dt) {
    const V shift = eng.add(eng.scale(k, dt), eng.scale(w, std::sqrt(dt)));
    return eng.add(eng.add(x, eng.scale(f, dt)), eng.matmul(sigma, shift));
}

// y_{n+1} = y − (h − zᵀK) Δt + zᵀ w √Δt; `ones_m` is 1 × m. The
// compensation enters with a plus sign on zᵀK, so y accumulates the running
// cost of the sampled controls and y_0 estimates the value function.
template <ad::Engine E, class V = typename E::Value>
V bsde_step(E& eng, const V& y, const V& z, const V& h, const V& k, const V& w, const V& ones_m,
            double dt) {
    const V zk = eng.matmul(ones_m, eng.mul(z, k));
    const V zw = eng.matmul(ones_m, eng.mul(z, w));
    return eng.add(eng.sub(y, eng.scale(eng.sub(h, zk), dt)), eng.scale(zw, std::sqrt(dt)));
}

// Value-gradient predictor backed by the LSTM stack.
template <class V>
class LstmPredictor {
public:
    explicit LstmPredictor(const nn::NetHandles<V>& net) : net_(&net) {}

    template <ad::Engine E>
    void begin(E& eng, const V& ones) {
        const std::size_t batch = eng.value(ones).cols();
        auto cell = [&](const nn::LayerHandles<V>& l) {
            const std::size_t h = eng.value(l.u).cols();
            return nn::CellState<V>{eng.constant(Matrix(h, batch)), eng.constant(Matrix(h, batch))};
        };
        state_ = {cell(net_->layer1), cell(net_->layer2)};
        ones_ = &ones;
    }

    template <ad::Engine E>
    V predict(E& eng, const V& x, std::size_t /*step*/) {
        auto [z, next] = nn::lstm_stack_forward(eng, *net_, x, state_, *ones_);
        state_ = std::move(next);
        return z;
    }

private:
    const nn::NetHandles<V>* net_;
    nn::StackState<V> state_;
    const V* ones_ = nullptr;
};

// z_n = gains[n] · x_n; used to inject an analytic value gradient.
class LinearFeedbackPredictor {
public:
    explicit LinearFeedbackPredictor(std::vector<Matrix> gains) : gains_(std::move(gains)) {}

    template <ad::Engine E, class V = typename E::Value>
    void begin(E&, const V&) {}

    template <ad::Engine E, class V = typename E::Value>
    V predict(E& eng, const V& x, std::size_t step) {
        return eng.matmul(eng.constant(gains_.at(step)), x);
    }

private:
    std::vector<Matrix> gains_;
};

template <ad::Engine E, class Predictor, class V = typename E::Value>
RolloutRecord<V> rollout(E& eng, const RolloutContext& ctx, const V& y0, const V& z0,
                         Predictor& predictor, const NoiseSource& noise,
                         std::span<const std::size_t> samples, RolloutStats* stats = nullptr) {
    const auto& sys = ctx.system();
    const auto& costs = ctx.costs();
    const auto& grid = ctx.grid();
    const auto& law = ctx.law();
    const std::size_t batch = samples.size();
    const std::size_t n = sys.state_dim();
    const std::size_t m = sys.noise_dim();

    const V ones = eng.constant(Matrix(1, batch, 1.0));
    const V ones_m = eng.constant(Matrix(1, m, 1.0));
    const V sigma = eng.constant(ctx.sigma());
    const V gamma = eng.constant(law.gamma);
    const V u_gain = eng.constant(law.u_gain);
    const V h_form = eng.constant(law.h_form);
    predictor.begin(eng, ones);

    Matrix x0(n, batch);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < batch; ++c) x0(r, c) = ctx.config().initial_state[r];

    RolloutRecord<V> rec;
    rec.x.reserve(grid.steps + 1);
    rec.y.reserve(grid.steps + 1);
    rec.z.reserve(grid.steps + 1);
    rec.x.push_back(eng.constant(std::move(x0)));
    rec.y.push_back(eng.matmul(y0, ones));
    rec.z.push_back(eng.matmul(z0, ones));

    for (std::size_t step = 0; step < grid.steps; ++step) {
        const double t = grid.time(step);
        const V& x = rec.x.back();
        const V& y = rec.y.back();
        const V& z = rec.z.back();

        V u = eng.matmul(u_gain, z);
        V k = eng.matmul(gamma, u);
        if (ctx.adversary_active()) {
            V v = eng.scale(z, law.inv_epsilon);
            k = eng.add(k, v);
            rec.v.push_back(std::move(v));
            if (stats) ++stats->adversary_evaluations;
        }
        const V q = quadratic_cost(eng, x, costs.running_weights, costs);
        const V h = eng.sub(q, eng.scale(eng.matmul(ones_m, eng.mul(z, eng.matmul(h_form, z))), 0.5));

        Matrix draw(m, batch);
        noise.draw(step, samples, draw);
        V w = eng.constant(std::move(draw));

        V y_next = bsde_step(eng, y, z, h, k, w, ones_m, grid.dt);
        const V f = eng.column_map(x, DriftMap(sys, t));
        V x_next = fsde_step(eng, x, f, k, w, sigma, grid.dt);
        V z_next = predictor.predict(eng, x_next, step + 1);

        rec.u.push_back(std::move(u));
        rec.w.push_back(std::move(w));
        rec.x.push_back(std::move(x_next));
        rec.y.push_back(std::move(y_next));
        rec.z.push_back(std::move(z_next));
    }
    rec.y_star = quadratic_cost(eng, rec.x.back(), costs.terminal_weights, costs);
    return rec;
}

// Σ_i β (y*_i − y_i)² + (1 − β) (y*_i)² over the batch, as a 1×1 value.
template <ad::Engine E, class V = typename E::Value>
V terminal_loss_sum(E& eng, const V& y_star, const V& y_final, double beta) {
    return eng.add(eng.scale(eng.sum_of_squares(eng.sub(y_star, y_final)), beta),
                   eng.scale(eng.sum_of_squares(y_star), 1.0 - beta));
}

// (1/M) Σ_i [β (y*_i − y_i)² + (1 − β)(y*_i)²] + λ ‖θ‖².
template <ad::Engine E, class V = typename E::Value>
V training_loss(E& eng, const V& y_star, const V& y_final, const V& theta_norm2, double beta,
                double lambda) {
    const double batch = static_cast<double>(eng.value(y_star).cols());
    return eng.add(eng.scale(terminal_loss_sum(eng, y_star, y_final, beta), 1.0 / batch),
                   eng.scale(theta_norm2, lambda));
}

// Columns with any non-finite recorded state or value.
template <ad::Engine E, class V = typename E::Value>
std::vector<bool> diverged_samples(const E& eng, const RolloutRecord<V>& rec) {
    const std::size_t batch = eng.value(rec.y_star).cols();
    std::vector<bool> bad(batch, false);
    auto scan = [&](const Matrix& m) {
        for (std::size_t r = 0; r < m.rows(); ++r)
            for (std::size_t c = 0; c < batch; ++c)
                if (!std::isfinite(m(r, c))) bad[c] = true;
    };
    for (const auto& x : rec.x) scan(eng.value(x));
    for (const auto& y : rec.y) scan(eng.value(y));
    scan(eng.value(rec.y_star));
    return bad;
}

// Tape-free rollout of the trained network on `samples`.
struct RolloutBatch {
    RolloutRecord<Matrix> record;
    std::vector<std::size_t> samples;
    std::vector<bool> diverged;
    RolloutStats stats;
};

RolloutBatch rollout_batch(const nn::NetParams& net, double y0, std::span<const double> z0,
                           const RolloutContext& ctx, const NoiseSource& noise,
                           std::span<const std::size_t> samples);

// Single-sample forms of the discrete steps.
std::vector<double> fsde_step(std::span<const double> x, std::span<const double> u,
                              std::span<const double> v, std::span<const double> dw,
                              const sys::SystemModel& sys, double t, double dt);
double bsde_step(double y, std::span<const double> z, double h, std::span<const double> k,
                 std::span<const double> dw, double dt);

}  // namespace mmfbsde::core
