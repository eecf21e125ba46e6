#include "mmfbsde/core/controls.hpp"
#include "mmfbsde/core/noise.hpp"
#include "mmfbsde/core/rollout.hpp"
#include "mmfbsde/neural/lstm.hpp"
#include "mmfbsde/systems/system.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

using namespace mmfbsde;
using std::numbers::pi;

namespace {

sys::CostSpec pendulum_costs(double epsilon) {
    sys::CostSpec c;
    c.running_weights = {1.0, 0.1};
    c.terminal_weights = {100.0, 10.0};
    c.target = {pi, 0.0};
    c.angle_states = {0};
    c.control_weight = Matrix(1, 1, 1.0);
    c.epsilon = epsilon;
    return c;
}

nn::NetParams random_net(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return nn::init_net({2, 4, 4, 1, 1.0}, rng);
}

std::vector<std::size_t> iota(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), 0);
    return v;
}

struct PendulumSetup {
    std::unique_ptr<sys::SystemModel> system =
        sys::make_system("pendulum", sys::default_physics("pendulum"), 0.5);
    sys::CostSpec costs;
    std::unique_ptr<core::RolloutContext> ctx;

    PendulumSetup(double epsilon, core::Mode mode, std::size_t steps, bool adversary = true)
        : costs(pendulum_costs(epsilon)) {
        ctx = std::make_unique<core::RolloutContext>(core::RolloutConfig{
            system.get(), &costs, core::HorizonGrid::make(0.0, 1.5, steps), {0.0, 0.0}, mode, adversary});
    }
};

void check_close(const std::vector<Matrix>& a, const std::vector<Matrix>& b, double tol) {
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k)
        for (std::size_t i = 0; i < a[k].size(); ++i) CHECK(std::abs(a[k][i] - b[k][i]) <= tol);
}

}  // namespace

TEST_CASE("optimal controls") {
    const Matrix one(1, 1, 1.0);
    const double z[] = {4.0};
    const auto c = core::optimal_controls(z, one, Matrix(1, 1, 2.0), 2.0);
    CHECK(c.u[0] == doctest::Approx(-2.0));
    CHECK(c.v[0] == doctest::Approx(2.0));
    const double zero[] = {0.0};
    const auto c0 = core::optimal_controls(zero, one, one, 2.0);
    CHECK(c0.u[0] == 0.0);
    CHECK(c0.v[0] == 0.0);
    const double big[] = {3.0, -4.0};
    const auto cn = core::optimal_controls(big, Matrix::from_rows({{1}, {0.5}}), one, 1e12);
    CHECK(std::hypot(cn.v[0], cn.v[1]) <= 1e-12 * 5.0);
    CHECK_THROWS(core::optimal_controls(z, one, one, 0.0));
}

TEST_CASE("risk-sensitive driver") {
    sys::CostSpec c;
    c.running_weights = {2.0};
    c.terminal_weights = {0.0};
    c.target = {0.0};
    c.control_weight = Matrix(1, 1, 1.0);
    c.epsilon = 2.0;
    const Matrix one(1, 1, 1.0);
    const double x[] = {1.0};  // q = ½·2·1² = 1
    const double z[] = {2.0};
    CHECK(core::h_drift(x, z, c, one, 0.0) == doctest::Approx(0.0));
    const double zero[] = {0.0};
    CHECK(core::h_drift(x, zero, c, one, 0.0) == doctest::Approx(1.0));
    c.epsilon = 1e12;
    const double zz[] = {3.0};
    const double rn = core::h_drift_risk_neutral(x, zz, c, one, 0.0);
    CHECK(std::abs(core::h_drift(x, zz, c, one, 0.0) - rn) <= 9.0 / 1e12 + 1e-15);
}

TEST_CASE("the z-form driver agrees with the sigma form") {
    auto quad = sys::make_system("quadcopter", sys::default_physics("quadcopter"), 0.3);
    std::vector<double> x(12, 0.1);
    const auto d = quad->eval_dynamics(x, 0.0);
    sys::CostSpec c;
    c.running_weights.assign(12, 1.0);
    c.terminal_weights.assign(12, 1.0);
    c.target.assign(12, 0.0);
    c.control_weight = Matrix::from_rows({{1, 0, 0, 0}, {0, 2, 0.5, 0}, {0, 0.5, 3, 0}, {0, 0, 0, 1}});
    c.epsilon = 0.7;
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        Matrix vx(12, 1);
        for (std::size_t i = 0; i < 12; ++i) vx[i] = n(rng) * 1e-3;
        const Matrix z = matmul(transpose(d.diffusion), vx);
        const double hz = core::h_drift(x, z.values(), c, d.control_to_noise, 0.0);
        const double hs = core::h_drift_sigma_form(x, vx.values(), c, d.diffusion, d.control_to_noise, 0.0);
        CHECK(hz == doctest::Approx(hs).epsilon(1e-10));
    }
}

TEST_CASE("discrete steps") {
    auto lin = std::make_unique<sys::LinearSystem>(Matrix(1, 1, 0.0), Matrix(1, 1, 1.0), 1.0);
    const double x0[] = {0.7};
    const double zero[] = {0.0};
    CHECK(core::fsde_step(x0, zero, zero, zero, *lin, 0.0, 0.1)[0] == 0.7);

    sys::PendulumParams p;
    sys::Pendulum pend(p, 1.0);  // m = l = 1 so Σ channel = 1 and Γ_u = 1
    const double top[] = {pi, 0.0};
    const double u[] = {0.5};
    const auto next = core::fsde_step(top, u, zero, zero, pend, 0.0, 0.02);
    CHECK(next[0] == doctest::Approx(pi));
    CHECK(next[1] == doctest::Approx(0.01));

    CHECK(core::bsde_step(1.0, zero, 0.0, zero, zero, 0.1) == 1.0);
    const double z1[] = {1.0};
    const double k3[] = {3.0};
    // 1 − (2 − 1·3)·0.1
    CHECK(core::bsde_step(1.0, z1, 2.0, k3, zero, 0.1) == doctest::Approx(1.1));
    const double w[] = {2.0};
    CHECK(core::bsde_step(1.0, z1, 0.0, zero, w, 0.25) == doctest::Approx(2.0));
}

TEST_CASE("euler error on the linear decay halves with the step") {
    sys::LinearSystem decay(Matrix(1, 1, -1.0), Matrix(1, 1, 1.0), 1.0);
    auto err = [&](std::size_t steps) {
        const double dt = 1.0 / static_cast<double>(steps);
        std::vector<double> x{1.0};
        const double zero[] = {0.0};
        for (std::size_t k = 0; k < steps; ++k) x = core::fsde_step(x, zero, zero, zero, decay, 0.0, dt);
        return std::abs(x[0] - std::exp(-1.0));
    };
    const double e1 = err(25), e2 = err(50), e3 = err(100);
    CHECK(e2 / e1 == doctest::Approx(0.5).epsilon(0.05));
    CHECK(e3 / e2 == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("grid") {
    const auto g = core::HorizonGrid::make(0.0, 1.5, 75);
    CHECK(g.dt == doctest::Approx(0.02));
    CHECK(g.time(75) == doctest::Approx(1.5));
    CHECK_THROWS(core::HorizonGrid::make(1.0, 1.0, 3));
}

TEST_CASE("counter noise is a pure function of its indices") {
    const core::CounterNoise a(3, 7), b(3, 7), other(3, 8);
    const std::vector<std::size_t> all{0, 1, 2, 3, 4};
    const std::vector<std::size_t> some{3, 1};
    Matrix fa(2, 5), fb(2, 5), part(2, 2), fo(2, 5);
    a.draw(4, all, fa);
    b.draw(4, all, fb);
    other.draw(4, all, fo);
    a.draw(4, some, part);
    CHECK(fa == fb);
    CHECK(fa != fo);
    for (std::size_t ch = 0; ch < 2; ++ch) {
        CHECK(part(ch, 0) == fa(ch, 3));
        CHECK(part(ch, 1) == fa(ch, 1));
    }
    double mean = 0.0, sq = 0.0;
    const int count = 200000;
    for (int i = 0; i < count; ++i) {
        const double v = core::counter_normal(1, 0, static_cast<std::uint64_t>(i), 0, 0);
        mean += v;
        sq += v * v;
    }
    mean /= count;
    CHECK(std::abs(mean) < 0.01);
    CHECK(sq / count == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("training loss") {
    ad::ValueEngine e;
    const Matrix ys = Matrix::from_rows({{2.0, -1.0}});
    CHECK(core::training_loss(e, ys, ys, Matrix(1, 1, 5.0), 1.0, 0.0)[0] == 0.0);
    const double base = core::training_loss(e, Matrix(1, 1, 2.0), Matrix(1, 1, 0.0), Matrix(1, 1, 10.0), 0.5, 0.0)[0];
    CHECK(base == doctest::Approx(4.0));
    const double reg = core::training_loss(e, Matrix(1, 1, 2.0), Matrix(1, 1, 0.0), Matrix(1, 1, 10.0), 0.5, 0.1)[0];
    CHECK(reg - base == doctest::Approx(1.0));
}

TEST_CASE("degenerate grid rollout") {
    PendulumSetup s(0.5, core::Mode::MinMax, 0);
    const auto net = random_net(1);
    const double z0[] = {0.3};
    const auto batch = core::rollout_batch(net, 1.25, z0, *s.ctx, core::CounterNoise(1, 0), iota(3));
    CHECK(batch.record.x.size() == 1);
    CHECK(batch.record.y[0] == Matrix(1, 3, 1.25));
    const double xi[] = {0.0, 0.0};
    for (std::size_t i = 0; i < 3; ++i) CHECK(batch.record.y_star[i] == doctest::Approx(s.costs.terminal(xi)));
}

TEST_CASE("rollouts are deterministic and columns are independent") {
    PendulumSetup s(0.5, core::Mode::MinMax, 20);
    const auto net = random_net(2);
    const double z0[] = {-0.2};
    const core::CounterNoise noise(9, 4);
    const auto a = core::rollout_batch(net, 0.0, z0, *s.ctx, noise, iota(2));
    const auto b = core::rollout_batch(net, 0.0, z0, *s.ctx, noise, iota(2));
    CHECK(a.record.x == b.record.x);
    CHECK(a.record.y == b.record.y);
    CHECK(a.record.y_star == b.record.y_star);
    const std::vector<std::size_t> one{1};
    const auto c = core::rollout_batch(net, 0.0, z0, *s.ctx, noise, one);
    for (std::size_t k = 0; k < c.record.x.size(); ++k) {
        CHECK(c.record.x[k](0, 0) == a.record.x[k](0, 1));
        CHECK(c.record.y[k](0, 0) == a.record.y[k](0, 1));
    }
}

TEST_CASE("zero network with zero noise follows the uncontrolled euler flow") {
    nn::NetParams net = random_net(3);
    net.out_weights.fill(0.0);
    net.out_bias.fill(0.0);
    const double z0[] = {0.0};
    sys::Pendulum pend(sys::PendulumParams{}, 0.5);
    PendulumSetup shifted(0.5, core::Mode::MinMax, 30);
    auto ctx = core::RolloutContext(core::RolloutConfig{shifted.system.get(), &shifted.costs,
                                                        core::HorizonGrid::make(0.0, 1.5, 30), {1.0, 0.5},
                                                        core::Mode::MinMax, true});
    const auto b = core::rollout_batch(net, 0.0, z0, ctx, core::ZeroNoise(), iota(1));
    std::vector<double> x{1.0, 0.5}, f(2);
    double y = 0.0;
    for (std::size_t k = 0; k < 30; ++k) {
        y -= shifted.costs.running(x, k * 0.05) * 0.05;
        pend.drift(x, k * 0.05, f);
        x[0] += f[0] * 0.05;
        x[1] += f[1] * 0.05;
        CHECK(b.record.x[k + 1](0, 0) == doctest::Approx(x[0]).epsilon(1e-12));
        CHECK(b.record.x[k + 1](1, 0) == doctest::Approx(x[1]).epsilon(1e-12));
        CHECK(b.record.y[k + 1](0, 0) == doctest::Approx(y).epsilon(1e-12));
    }
}

TEST_CASE("huge epsilon reproduces the baseline rollout") {
    PendulumSetup rs(1e12, core::Mode::MinMax, 40);
    PendulumSetup base(1e12, core::Mode::Baseline, 40);
    const auto net = random_net(4);
    const double z0[] = {0.4};
    const core::CounterNoise noise(5, 0);
    const auto a = core::rollout_batch(net, 0.3, z0, *rs.ctx, noise, iota(16));
    const auto b = core::rollout_batch(net, 0.3, z0, *base.ctx, noise, iota(16));
    CHECK(a.stats.adversary_evaluations > 0);
    CHECK(b.stats.adversary_evaluations == 0);
    check_close(a.record.x, b.record.x, 1e-6);
    check_close(a.record.y, b.record.y, 1e-6);
    check_close(a.record.z, b.record.z, 1e-6);
    check_close({a.record.y_star}, {b.record.y_star}, 1e-6);
}

TEST_CASE("adversary off evaluates no adversarial control") {
    PendulumSetup s(0.5, core::Mode::MinMax, 10, false);
    const auto net = random_net(5);
    const double z0[] = {0.4};
    const auto b = core::rollout_batch(net, 0.0, z0, *s.ctx, core::CounterNoise(1, 0), iota(4));
    CHECK(b.stats.adversary_evaluations == 0);
    CHECK(b.record.v.empty());
}

TEST_CASE("diverging samples are flagged per column") {
    ad::ValueEngine e;
    core::RolloutRecord<Matrix> rec;
    rec.x.push_back(Matrix::from_rows({{1.0, std::nan(""), 2.0}}));
    rec.y.push_back(Matrix(1, 3, 0.0));
    rec.y_star = Matrix::from_rows({{0.0, 0.0, INFINITY}});
    const auto bad = core::diverged_samples(e, rec);
    CHECK(bad == std::vector<bool>{false, true, true});
}
