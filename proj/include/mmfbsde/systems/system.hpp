#pragma once

// Control-affine stochastic systems
//
//   dx = f(x,t) dt + G(x,t) u dt + Σ(x,t) (v dt + dw)
//
// with the factorisation G = Σ Γ_u, so every actuated channel is also a
// noise channel and the adversary acts through Σ (Γ_v = I).

#include "mmfbsde/autodiff/matrix.hpp"
#include "mmfbsde/systems/dual.hpp"

#include <json.hpp>

#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mmfbsde::sys {

class NonFiniteState : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

struct Dynamics {
    Matrix drift;             // n × 1
    Matrix actuation;         // n × p   (G)
    Matrix diffusion;         // n × m   (Σ)
    Matrix control_to_noise;  // m × p   (Γ_u)
};

class SystemModel {
public:
    SystemModel(std::size_t n, std::size_t p, std::size_t m) : n_(n), p_(p), m_(m) {}
    virtual ~SystemModel() = default;

    virtual std::string_view name() const = 0;
    std::size_t state_dim() const { return n_; }
    std::size_t control_dim() const { return p_; }
    std::size_t noise_dim() const { return m_; }

    virtual void drift(std::span<const double> x, double t, std::span<double> f) const = 0;
    // Fills f and the row-major n × n Jacobian ∂f/∂x.
    virtual void drift_jacobian(std::span<const double> x, double t, std::span<double> f,
                                std::span<double> jac) const = 0;
    virtual Matrix actuation(std::span<const double> x, double t) const = 0;
    virtual Matrix diffusion(std::span<const double> x, double t) const = 0;
    virtual Matrix control_to_noise(std::span<const double> x, double t) const = 0;

    // Σ and Γ_u do not vary with (x, t); the rollout evaluates them once.
    virtual bool channels_state_independent() const { return true; }
    // State indices holding angles, wrapped for cost evaluation.
    virtual std::vector<std::size_t> angle_states() const { return {}; }
    // Physical constants, echoed into run metadata.
    virtual nlohmann::json constants() const = 0;

    // All four coefficient arrays at (x, t). Throws NonFiniteState when x has
    // a non-finite entry.
    Dynamics eval_dynamics(std::span<const double> x, double t) const;

private:
    std::size_t n_, p_, m_;
};

// Implements drift/drift_jacobian from one templated drift body.
template <class Derived>
class DriftFromTemplate : public SystemModel {
public:
    using SystemModel::SystemModel;

    void drift(std::span<const double> x, double t, std::span<double> f) const final {
        static_cast<const Derived&>(*this).template drift_t<double>(x, t, f);
    }

    void drift_jacobian(std::span<const double> x, double t, std::span<double> f,
                        std::span<double> jac) const final {
        drift(x, t, f);
        const std::size_t n = state_dim();
        std::vector<Dual> xd(n), fd(n);
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t i = 0; i < n; ++i) xd[i] = Dual(x[i], i == j ? 1.0 : 0.0);
            static_cast<const Derived&>(*this).template drift_t<Dual>(xd, t, fd);
            for (std::size_t i = 0; i < n; ++i) jac[i * n + j] = fd[i].d;
        }
    }
};

struct PendulumParams {
    double mass = 1.0;
    double length = 1.0;
    double damping = 0.1;
    double gravity = 9.81;
};

// State (θ, θ̇) with θ = 0 hanging down; torque input; noise on the
// angular-acceleration channel.
class Pendulum final : public DriftFromTemplate<Pendulum> {
public:
    Pendulum(PendulumParams params, double noise_scale);

    std::string_view name() const override { return "pendulum"; }
    Matrix actuation(std::span<const double>, double) const override;
    Matrix diffusion(std::span<const double>, double) const override;
    Matrix control_to_noise(std::span<const double>, double) const override;
    std::vector<std::size_t> angle_states() const override { return {0}; }
    nlohmann::json constants() const override;

    const PendulumParams& params() const { return params_; }

    template <class T>
    void drift_t(std::span<const T> x, double, std::span<T> f) const {
        const double inertia = params_.mass * params_.length * params_.length;
        f[0] = x[1];
        f[1] = (T(0.0) - params_.damping * x[1] -
                params_.mass * params_.gravity * params_.length * sin(x[0])) /
               inertia;
    }

private:
    PendulumParams params_;
    double noise_scale_;
};

struct QuadcopterParams {
    double mass = 0.5;
    double arm_length = 0.17;
    double inertia_x = 0.0039;
    double inertia_y = 0.0039;
    double inertia_z = 0.0070;
    double gravity = 9.81;
};

// 12-state rigid body, z up:
//   [x y z | φ θ ψ | u v w | p q r]
// position (world), ZYX Euler angles, body-frame linear and angular
// velocities. Controls: [thrust deviation from hover, τx, τy, τz]. The hover
// thrust m·g is part of the drift, so u = 0 holds a level hover. Noise enters
// the four actuated acceleration channels (ẇ, ṗ, q̇, ṙ).
class Quadcopter final : public DriftFromTemplate<Quadcopter> {
public:
    Quadcopter(QuadcopterParams params, double noise_scale);

    std::string_view name() const override { return "quadcopter"; }
    Matrix actuation(std::span<const double>, double) const override;
    Matrix diffusion(std::span<const double>, double) const override;
    Matrix control_to_noise(std::span<const double>, double) const override;
    std::vector<std::size_t> angle_states() const override { return {3, 4, 5}; }
    nlohmann::json constants() const override;

    const QuadcopterParams& params() const { return params_; }

    template <class T>
    void drift_t(std::span<const T> s, double, std::span<T> f) const {
        const double g = params_.gravity;
        const T& phi = s[3];
        const T& theta = s[4];
        const T& psi = s[5];
        const T& u = s[6];
        const T& v = s[7];
        const T& w = s[8];
        const T& p = s[9];
        const T& q = s[10];
        const T& r = s[11];
        const T cphi = cos(phi), sphi = sin(phi);
        const T cth = cos(theta), sth = sin(theta);
        const T cpsi = cos(psi), spsi = sin(psi);

        // World velocity = R(ψ,θ,φ) · body velocity.
        f[0] = cth * cpsi * u + (sphi * sth * cpsi - cphi * spsi) * v + (cphi * sth * cpsi + sphi * spsi) * w;
        f[1] = cth * spsi * u + (sphi * sth * spsi + cphi * cpsi) * v + (cphi * sth * spsi - sphi * cpsi) * w;
        f[2] = T(0.0) - sth * u + sphi * cth * v + cphi * cth * w;

        f[3] = p + (q * sphi + r * cphi) * tan(theta);
        f[4] = q * cphi - r * sphi;
        f[5] = (q * sphi + r * cphi) / cth;

        f[6] = r * v - q * w + g * sth;
        f[7] = p * w - r * u - g * cth * sphi;
        f[8] = q * u - p * v - g * cth * cphi + T(g);

        const double ix = params_.inertia_x, iy = params_.inertia_y, iz = params_.inertia_z;
        f[9] = (iy - iz) / ix * q * r;
        f[10] = (iz - ix) / iy * p * r;
        f[11] = (ix - iy) / iz * p * q;
    }

private:
    QuadcopterParams params_;
    double noise_scale_;
};

// ẋ = A x + B u with Σ = σ B (noise enters through the input channels).
class LinearSystem final : public SystemModel {
public:
    LinearSystem(Matrix a, Matrix b, double noise_scale);

    std::string_view name() const override { return "lq"; }
    void drift(std::span<const double> x, double t, std::span<double> f) const override;
    void drift_jacobian(std::span<const double> x, double t, std::span<double> f,
                        std::span<double> jac) const override;
    Matrix actuation(std::span<const double>, double) const override { return b_; }
    Matrix diffusion(std::span<const double>, double) const override;
    Matrix control_to_noise(std::span<const double>, double) const override;
    nlohmann::json constants() const override;

    const Matrix& a() const { return a_; }
    const Matrix& b() const { return b_; }
    double noise_scale() const { return noise_scale_; }

private:
    Matrix a_, b_;
    double noise_scale_;
};

// Builds a registered system by name from its physical-constant block.
std::unique_ptr<SystemModel> make_system(std::string_view name, const nlohmann::json& physics,
                                         double noise_scale);
nlohmann::json default_physics(std::string_view name);
std::vector<std::string> registered_systems();

}  // namespace mmfbsde::sys
