#pragma once

#include "mmfbsde/autodiff/matrix.hpp"

#include <numbers>
#include <span>
#include <vector>

namespace mmfbsde::sys {

// Wraps an angle to (−π, π].
double wrap_angle(double a);

// Diagonal quadratic running/terminal costs around a target state,
// q(x) = ½ Σ_j w_j d_j², where d = x − target and angle components of d are
// wrapped to (−π, π]. Also carries the control weight R_u and the
// risk/loss scalars.
struct CostSpec {
    std::vector<double> running_weights;
    std::vector<double> terminal_weights;
    std::vector<double> target;
    std::vector<std::size_t> angle_states;
    Matrix control_weight;  // R_u, p × p, symmetric positive definite
    double epsilon = 1.0;   // risk sensitivity, R_v = ε I
    double beta = 0.8;
    double lambda = 1e-4;

    // Throws std::invalid_argument for wrong sizes, negative weights,
    // non-SPD R_u, ε ≤ 0, β ∉ [0,1] or λ < 0.
    void validate(std::size_t state_dim, std::size_t control_dim) const;

    // Target deviation with angle components wrapped.
    std::vector<double> deviation(std::span<const double> x) const;
    double running(std::span<const double> x, double t) const;
    double terminal(std::span<const double> x) const;
};

// Lower Cholesky factor of a symmetric positive definite matrix; throws
// std::invalid_argument otherwise.
Matrix cholesky(const Matrix& spd);
// Solves (L Lᵀ) X = B for X given the factor L.
Matrix cholesky_solve(const Matrix& lower, const Matrix& b);

}  // namespace mmfbsde::sys
