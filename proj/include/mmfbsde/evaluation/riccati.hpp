#pragma once

#include "mmfbsde/autodiff/matrix.hpp"
#include "mmfbsde/core/grid.hpp"
#include "mmfbsde/systems/cost.hpp"

#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace mmfbsde::eval {

// dx = (A x + B u) dt + Σ dW with cost ∫ ½(xᵀQx + uᵀRu) dt + ½ x_Tᵀ Q_f x_T.
struct LqBenchmark {
    Matrix a, b, sigma, q, q_final, r;
    std::vector<double> initial_state;
    double t0 = 0.0;
    double horizon = 1.0;
    std::size_t steps = 50;

    // Double integrator with noise of scale `noise` on the velocity.
    static LqBenchmark double_integrator(double noise);
    void validate() const;
    // Diagonal cost spec matching q and q_final (both must be diagonal).
    sys::CostSpec cost_spec(double epsilon, double beta, double lambda) const;
};

class RiccatiBlowup : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// V(x, t_n) = ½ xᵀ P_n x + c_n on the grid.
struct RiccatiSolution {
    core::HorizonGrid grid;
    std::vector<Matrix> p;
    std::vector<double> c;
    Matrix sigma;

    double value(std::span<const double> x, std::size_t n) const;
    std::vector<double> gradient(std::span<const double> x, std::size_t n) const;
    // z = Σᵀ V_x.
    std::vector<double> z(std::span<const double> x, std::size_t n) const;
};

// Integrates
//   −Ṗ = Q + AᵀP + PA − P (B R⁻¹ Bᵀ − Σ Σᵀ/ε) P,   −ċ = ½ tr(P Σ Σᵀ)
// backward from P(T) = Q_f, c(T) = 0 with classical RK4 at grid.dt/substeps.
// ε = ∞ gives the risk-neutral equation.
RiccatiSolution riccati_oracle(const LqBenchmark& bench, const core::HorizonGrid& grid,
                               std::size_t substeps = 10,
                               double epsilon = std::numeric_limits<double>::infinity());

}  // namespace mmfbsde::eval

namespace mmfbsde::eval {

// Mean |y_N − g(x_N)| over `samples` rollouts of the risk-neutral LQ FBSDE
// with y_0 = V(ξ, 0) and z_n = Σᵀ P_n x_n from the Riccati solution, one
// entry per Δt. Only discretisation error remains, so it shrinks with Δt.
std::vector<double> bsde_consistency(const LqBenchmark& bench, double noise_scale, std::span<const double> dts,
                                     std::size_t samples, std::uint64_t seed);

}  // namespace mmfbsde::eval
