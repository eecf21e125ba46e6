#include "mmfbsde/systems/cost.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace mmfbsde::sys {

double wrap_angle(double a) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    return a - two_pi * std::ceil((a - std::numbers::pi) / two_pi);
}

void CostSpec::validate(std::size_t n, std::size_t p) const {
    auto check_weights = [&](const std::vector<double>& w, const char* what) {
        if (w.size() != n) {
            throw std::invalid_argument(std::string(what) + " has " + std::to_string(w.size()) +
                                        " entries, state dimension is " + std::to_string(n));
        }
        for (double v : w) {
            if (!(v >= 0.0) || !std::isfinite(v)) {
                throw std::invalid_argument(std::string(what) + " must be non-negative and finite");
            }
        }
    };
    check_weights(running_weights, "running_weights");
    check_weights(terminal_weights, "terminal_weights");
    if (target.size() != n) throw std::invalid_argument("target has the wrong dimension");
    for (auto i : angle_states) {
        if (i >= n) throw std::invalid_argument("angle state index out of range");
    }
    if (control_weight.rows() != p || control_weight.cols() != p) {
        throw std::invalid_argument("control_weight must be " + std::to_string(p) + "x" +
                                    std::to_string(p));
    }
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < p; ++j)
            if (std::abs(control_weight(i, j) - control_weight(j, i)) > 1e-12)
                throw std::invalid_argument("control_weight must be symmetric");
    cholesky(control_weight);
    if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
    if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("beta must lie in [0, 1]");
    if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
}

std::vector<double> CostSpec::deviation(std::span<const double> x) const {
    std::vector<double> d(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] - target[i];
    for (auto i : angle_states) d[i] = wrap_angle(d[i]);
    return d;
}

namespace {

double quadratic(const std::vector<double>& w, const std::vector<double>& d) {
    double s = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) s += w[i] * d[i] * d[i];
    return 0.5 * s;
}

}  // namespace

double CostSpec::running(std::span<const double> x, double) const {
    return quadratic(running_weights, deviation(x));
}

double CostSpec::terminal(std::span<const double> x) const {
    return quadratic(terminal_weights, deviation(x));
}

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajor> view(const Matrix& m) {
    return {m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

Matrix from_eigen(const RowMajor& e) {
    Matrix m(static_cast<std::size_t>(e.rows()), static_cast<std::size_t>(e.cols()));
    Eigen::Map<RowMajor>(m.data(), e.rows(), e.cols()) = e;
    return m;
}

}  // namespace

Matrix cholesky(const Matrix& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("cholesky: matrix is not square");
    Eigen::LLT<RowMajor> llt(view(a));
    if (llt.info() != Eigen::Success) throw std::invalid_argument("matrix is not positive definite");
    return from_eigen(llt.matrixL());
}

Matrix cholesky_solve(const Matrix& l, const Matrix& b) {
    if (b.rows() != l.rows()) throw std::invalid_argument("cholesky_solve: shape mismatch");
    const auto lower = view(l).triangularView<Eigen::Lower>();
    RowMajor y = lower.solve(view(b));
    return from_eigen(lower.transpose().solve(y));
}

}  // namespace mmfbsde::sys
