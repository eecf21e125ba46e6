#pragma once

#include "mmfbsde/autodiff/matrix.hpp"
#include "mmfbsde/systems/cost.hpp"

#include <span>
#include <vector>

namespace mmfbsde::core {

enum class Mode {
    MinMax,    // adversary v* = z/ε active, risk-sensitive h
    Baseline,  // v* ≡ 0, risk-neutral h
};

// Matrices of the optimal control laws, built once per (Γ_u, R_u, ε, mode):
//   u* = −R_u⁻¹ Γ_uᵀ z,   v* = z / ε,
//   h  = q − ½ zᵀ (Γ_u R_u⁻¹ Γ_uᵀ − I/ε) z.
// R_u⁻¹ is applied through its Cholesky factor.
struct ControlLaw {
    Matrix gamma;       // Γ_u, m × p
    Matrix u_gain;      // −R_u⁻¹ Γ_uᵀ, p × m
    Matrix h_form;      // Γ_u R_u⁻¹ Γ_uᵀ − I/ε (baseline: without the I/ε term), m × m
    double inv_epsilon = 0.0;  // 0 in baseline mode
    Mode mode = Mode::MinMax;

    static ControlLaw make(const Matrix& gamma, const Matrix& control_weight, double epsilon, Mode mode);
};

struct OptimalControls {
    std::vector<double> u;
    std::vector<double> v;
};

OptimalControls optimal_controls(std::span<const double> z, const Matrix& gamma,
                                 const Matrix& control_weight, double epsilon);

// Risk-sensitive BSDE driver in z-form. Independent of y.
double h_drift(std::span<const double> x, std::span<const double> z, const sys::CostSpec& costs,
               const Matrix& gamma, double t);

// ε → ∞ form, q − ½ zᵀ Γ_u R_u⁻¹ Γ_uᵀ z.
double h_drift_risk_neutral(std::span<const double> x, std::span<const double> z,
                            const sys::CostSpec& costs, const Matrix& gamma, double t);

// The same driver written with V_x and Σ instead of z = Σᵀ V_x:
//   q − ½ V_xᵀ (Σ Γ_u R_u⁻¹ Γ_uᵀ Σᵀ − Σ Σᵀ/ε) V_x.
double h_drift_sigma_form(std::span<const double> x, std::span<const double> vx,
                          const sys::CostSpec& costs, const Matrix& sigma, const Matrix& gamma, double t);

}  // namespace mmfbsde::core
