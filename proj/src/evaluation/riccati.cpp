#include "mmfbsde/evaluation/riccati.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace mmfbsde::eval {
namespace {

using Mat = Eigen::MatrixXd;

Mat to_eigen(const Matrix& m) {
    Mat out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = m(r, c);
    return out;
}

Matrix from_eigen(const Mat& m) {
    Matrix out(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) out(r, c) = m(r, c);
    return out;
}

bool is_diagonal(const Matrix& m) {
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c)
            if (r != c && m(r, c) != 0.0) return false;
    return true;
}

}  // namespace

LqBenchmark LqBenchmark::double_integrator(double noise) {
    LqBenchmark b;
    b.a = Matrix::from_rows({{0.0, 1.0}, {0.0, 0.0}});
    b.b = Matrix::from_rows({{0.0}, {1.0}});
    b.sigma = Matrix::from_rows({{0.0}, {noise}});
    b.q = Matrix::from_rows({{1.0, 0.0}, {0.0, 0.1}});
    b.q_final = Matrix::from_rows({{10.0, 0.0}, {0.0, 1.0}});
    b.r = Matrix::from_rows({{1.0}});
    b.initial_state = {1.0, 0.0};
    return b;
}

void LqBenchmark::validate() const {
    const std::size_t n = a.rows();
    if (a.cols() != n || b.rows() != n || sigma.rows() != n || q.shape() != Shape{n, n} ||
        q_final.shape() != Shape{n, n} || r.shape() != Shape{b.cols(), b.cols()} || initial_state.size() != n) {
        throw std::invalid_argument("lq benchmark: inconsistent dimensions");
    }
    (void)sys::cholesky(r);
}

sys::CostSpec LqBenchmark::cost_spec(double epsilon, double beta, double lambda) const {
    if (!is_diagonal(q) || !is_diagonal(q_final))
        throw std::invalid_argument("lq benchmark: the cost spec requires diagonal Q and Q_f");
    sys::CostSpec c;
    for (std::size_t i = 0; i < q.rows(); ++i) {
        c.running_weights.push_back(q(i, i));
        c.terminal_weights.push_back(q_final(i, i));
        c.target.push_back(0.0);
    }
    c.control_weight = r;
    c.epsilon = epsilon;
    c.beta = beta;
    c.lambda = lambda;
    return c;
}

double RiccatiSolution::value(std::span<const double> x, std::size_t n) const {
    const Matrix& pn = p.at(n);
    double v = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = 0; j < x.size(); ++j) v += x[i] * pn(i, j) * x[j];
    return 0.5 * v + c.at(n);
}

std::vector<double> RiccatiSolution::gradient(std::span<const double> x, std::size_t n) const {
    return matmul(p.at(n), Matrix::column(x)).column_values(0);
}

std::vector<double> RiccatiSolution::z(std::span<const double> x, std::size_t n) const {
    const auto vx = gradient(x, n);
    return matmul(transpose(sigma), Matrix::column(vx)).column_values(0);
}

RiccatiSolution riccati_oracle(const LqBenchmark& bench, const core::HorizonGrid& grid,
                               std::size_t substeps, double epsilon) {
    bench.validate();
    if (substeps < 1) throw std::invalid_argument("riccati: substeps must be at least 1");
    if (!(epsilon > 0.0)) throw std::invalid_argument("riccati: epsilon must be positive");
    const Mat A = to_eigen(bench.a), B = to_eigen(bench.b), S = to_eigen(bench.sigma);
    const Mat Q = to_eigen(bench.q), R = to_eigen(bench.r);
    const Mat SS = S * S.transpose();
    Mat coupling = B * R.llt().solve(B.transpose());
    if (std::isfinite(epsilon)) coupling -= SS / epsilon;

    // d/ds of (P, c) in reversed time s = T − t.
    auto rhs = [&](const Mat& P) { return Mat(Q + A.transpose() * P + P * A - P * coupling * P); };
    auto crhs = [&](const Mat& P) { return 0.5 * (P * SS).trace(); };

    RiccatiSolution sol;
    sol.grid = grid;
    sol.sigma = bench.sigma;
    sol.p.resize(grid.steps + 1);
    sol.c.resize(grid.steps + 1);
    Mat P = to_eigen(bench.q_final);
    double c = 0.0;
    sol.p[grid.steps] = from_eigen(P);
    sol.c[grid.steps] = 0.0;
    const double h = grid.dt / static_cast<double>(substeps);
    for (std::size_t n = grid.steps; n-- > 0;) {
        for (std::size_t s = 0; s < substeps; ++s) {
            const Mat k1 = rhs(P);
            const Mat k2 = rhs(P + 0.5 * h * k1);
            const Mat k3 = rhs(P + 0.5 * h * k2);
            const Mat k4 = rhs(P + h * k3);
            const double c1 = crhs(P), c2 = crhs(P + 0.5 * h * k1), c3 = crhs(P + 0.5 * h * k2),
                         c4 = crhs(P + h * k3);
            P += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            P = 0.5 * (P + P.transpose());
            c += h / 6.0 * (c1 + 2.0 * c2 + 2.0 * c3 + c4);
            if (!P.allFinite() || P.cwiseAbs().maxCoeff() > 1e12 || !std::isfinite(c)) {
                throw RiccatiBlowup("riccati: solution escapes to infinity before t = " +
                                    std::to_string(grid.time(n)));
            }
        }
        sol.p[n] = from_eigen(P);
        sol.c[n] = c;
    }
    return sol;
}

}  // namespace mmfbsde::eval

#include "mmfbsde/core/rollout.hpp"
#include "mmfbsde/systems/system.hpp"

namespace mmfbsde::eval {

std::vector<double> bsde_consistency(const LqBenchmark& bench, double noise_scale, std::span<const double> dts,
                                     std::size_t samples, std::uint64_t seed) {
    const sys::LinearSystem system(bench.a, bench.b, noise_scale);
    if (max_abs_diff(system.diffusion({}, 0.0), bench.sigma) > 1e-15)
        throw std::invalid_argument("bsde_consistency: benchmark Σ must equal noise_scale · B");
    const sys::CostSpec costs = bench.cost_spec(1.0, 1.0, 0.0);
    std::vector<std::size_t> ids(samples);
    for (std::size_t i = 0; i < samples; ++i) ids[i] = i;

    std::vector<double> out;
    for (double dt : dts) {
        const double span = bench.horizon - bench.t0;
        const auto steps = static_cast<std::size_t>(std::llround(span / dt));
        if (steps == 0 || std::abs(static_cast<double>(steps) * dt - span) > 1e-9 * span)
            throw std::invalid_argument("bsde_consistency: dt must divide the horizon");
        const auto grid = core::HorizonGrid::make(bench.t0, bench.horizon, steps);
        const auto ric = riccati_oracle(bench, grid);

        core::RolloutConfig rc;
        rc.system = &system;
        rc.costs = &costs;
        rc.grid = grid;
        rc.initial_state = bench.initial_state;
        rc.mode = core::Mode::Baseline;
        rc.adversary = false;
        const core::RolloutContext ctx(rc);

        std::vector<Matrix> gains;
        for (std::size_t n = 0; n <= steps; ++n) gains.push_back(matmul(transpose(bench.sigma), ric.p[n]));
        core::LinearFeedbackPredictor predictor(gains);
        ad::ValueEngine eng;
        const Matrix y0(1, 1, ric.value(bench.initial_state, 0));
        const Matrix z0 = Matrix::column(ric.z(bench.initial_state, 0));
        const core::CounterNoise noise(seed, 0);
        const auto rec = core::rollout(eng, ctx, y0, z0, predictor, noise, std::span<const std::size_t>(ids));
        double err = 0.0;
        for (std::size_t i = 0; i < samples; ++i) err += std::abs(rec.y.back()(0, i) - rec.y_star(0, i));
        out.push_back(err / static_cast<double>(samples));
    }
    return out;
}

}  // namespace mmfbsde::eval
