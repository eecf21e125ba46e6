#include "mmfbsde/core/controls.hpp"

#include <stdexcept>

namespace mmfbsde::core {

namespace {

double quad_form(const Matrix& a, std::span<const double> z) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) s += z[i] * a(i, j) * z[j];
    return s;
}

// Γ R⁻¹ Γᵀ via the Cholesky factor of R.
Matrix control_form(const Matrix& gamma, const Matrix& r) {
    const Matrix rinv_gt = sys::cholesky_solve(sys::cholesky(r), transpose(gamma));
    return matmul(gamma, rinv_gt);
}

}  // namespace

ControlLaw ControlLaw::make(const Matrix& gamma, const Matrix& r, double epsilon, Mode mode) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
    if (r.rows() != gamma.cols()) throw std::invalid_argument("control weight does not match Γ_u");
    ControlLaw law;
    law.gamma = gamma;
    law.mode = mode;
    Matrix rinv_gt = sys::cholesky_solve(sys::cholesky(r), transpose(gamma));
    law.h_form = matmul(gamma, rinv_gt);
    for (auto& v : rinv_gt.values()) v = -v;
    law.u_gain = std::move(rinv_gt);
    if (mode == Mode::MinMax) {
        law.inv_epsilon = 1.0 / epsilon;
        for (std::size_t i = 0; i < law.h_form.rows(); ++i) law.h_form(i, i) -= law.inv_epsilon;
    }
    return law;
}

OptimalControls optimal_controls(std::span<const double> z, const Matrix& gamma,
                                 const Matrix& r, double epsilon) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
    if (z.size() != gamma.rows()) throw std::invalid_argument("optimal_controls: z/Γ_u size mismatch");
    const Matrix gtz = matmul(transpose(gamma), Matrix::column(z));
    const Matrix u = sys::cholesky_solve(sys::cholesky(r), gtz);
    OptimalControls out;
    out.u.resize(u.rows());
    for (std::size_t i = 0; i < u.rows(); ++i) out.u[i] = -u(i, 0);
    out.v.resize(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out.v[i] = z[i] / epsilon;
    return out;
}

double h_drift(std::span<const double> x, std::span<const double> z, const sys::CostSpec& costs,
               const Matrix& gamma, double t) {
    Matrix form = control_form(gamma, costs.control_weight);
    for (std::size_t i = 0; i < form.rows(); ++i) form(i, i) -= 1.0 / costs.epsilon;
    return costs.running(x, t) - 0.5 * quad_form(form, z);
}

double h_drift_risk_neutral(std::span<const double> x, std::span<const double> z,
                            const sys::CostSpec& costs, const Matrix& gamma, double t) {
    return costs.running(x, t) - 0.5 * quad_form(control_form(gamma, costs.control_weight), z);
}

double h_drift_sigma_form(std::span<const double> x, std::span<const double> vx,
                          const sys::CostSpec& costs, const Matrix& sigma, const Matrix& gamma,
                          double t) {
    const Matrix sg = matmul(sigma, gamma);
    Matrix form = matmul(matmul(sg, sys::cholesky_solve(sys::cholesky(costs.control_weight),
                                                        Matrix::identity(gamma.cols()))),
                         transpose(sg));
    const Matrix sst = matmul(sigma, transpose(sigma));
    for (std::size_t i = 0; i < form.size(); ++i) form[i] -= sst[i] / costs.epsilon;
    return costs.running(x, t) - 0.5 * quad_form(form, vx);
}

}  // namespace mmfbsde::core
