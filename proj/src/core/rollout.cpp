#include "mmfbsde/core/rollout.hpp"

#include <stdexcept>

namespace mmfbsde::core {

RolloutContext::RolloutContext(RolloutConfig cfg) : cfg_(std::move(cfg)) {
    if (!cfg_.system || !cfg_.costs) throw std::invalid_argument("rollout: system and costs are required");
    const auto& sys = *cfg_.system;
    if (cfg_.initial_state.size() != sys.state_dim()) {
        throw std::invalid_argument("rollout: initial state has " +
                                    std::to_string(cfg_.initial_state.size()) + " entries, system " +
                                    std::string(sys.name()) + " has " + std::to_string(sys.state_dim()));
    }
    if (!sys.channels_state_independent()) {
        throw std::invalid_argument("rollout: " + std::string(sys.name()) +
                                    " has state-dependent Σ/Γ_u, which the rollout does not support");
    }
    cfg_.costs->validate(sys.state_dim(), sys.control_dim());
    const auto dyn = sys.eval_dynamics(cfg_.initial_state, cfg_.grid.t0);
    const Matrix sg = matmul(dyn.diffusion, dyn.control_to_noise);
    if (max_abs_diff(sg, dyn.actuation) > 1e-10) {
        throw std::invalid_argument("rollout: " + std::string(sys.name()) + " violates G = Σ Γ_u");
    }
    sigma_ = dyn.diffusion;
    law_ = ControlLaw::make(dyn.control_to_noise, cfg_.costs->control_weight, cfg_.costs->epsilon,
                            cfg_.mode);
}

RolloutBatch rollout_batch(const nn::NetParams& net, double y0, std::span<const double> z0,
                           const RolloutContext& ctx, const NoiseSource& noise,
                           std::span<const std::size_t> samples) {
    ad::ValueEngine eng;
    const auto handles = nn::bind_constant(eng, net);
    LstmPredictor<Matrix> predictor(handles);
    RolloutBatch batch;
    batch.samples.assign(samples.begin(), samples.end());
    batch.record = rollout(eng, ctx, Matrix(1, 1, y0), Matrix::column(z0), predictor, noise, samples,
                           &batch.stats);
    batch.diverged = diverged_samples(eng, batch.record);
    return batch;
}

std::vector<double> fsde_step(std::span<const double> x, std::span<const double> u,
                              std::span<const double> v, std::span<const double> dw,
                              const sys::SystemModel& sys, double t, double dt) {
    const auto dyn = sys.eval_dynamics(x, t);
    ad::ValueEngine eng;
    const Matrix k_u = matmul(dyn.control_to_noise, Matrix::column(u));
    Matrix k = Matrix::column(v);
    for (std::size_t i = 0; i < k.size(); ++i) k[i] += k_u[i];
    const Matrix next =
        fsde_step(eng, Matrix::column(x), dyn.drift, k, Matrix::column(dw), dyn.diffusion, dt);
    if (!next.all_finite()) throw sys::NonFiniteState("fsde_step: non-finite result");
    return next.column_values(0);
}

double bsde_step(double y, std::span<const double> z, double h, std::span<const double> k,
                 std::span<const double> dw, double dt) {
    ad::ValueEngine eng;
    const Matrix out = bsde_step(eng, Matrix(1, 1, y), Matrix::column(z), Matrix(1, 1, h),
                                 Matrix::column(k), Matrix::column(dw), Matrix(1, z.size(), 1.0), dt);
    if (!std::isfinite(out[0])) throw sys::NonFiniteState("bsde_step: non-finite result");
    return out[0];
}

}  // namespace mmfbsde::core
