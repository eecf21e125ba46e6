#include "mmfbsde/systems/system.hpp"

#include <cmath>

namespace mmfbsde::sys {

Dynamics SystemModel::eval_dynamics(std::span<const double> x, double t) const {
    if (x.size() != n_) {
        throw std::invalid_argument(std::string(name()) + ": state has " + std::to_string(x.size()) +
                                    " entries, expected " + std::to_string(n_));
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i])) {
            throw NonFiniteState(std::string(name()) + ": non-finite state component " +
                                 std::to_string(i));
        }
    }
    Dynamics d;
    d.drift = Matrix(n_, 1);
    drift(x, t, d.drift.values());
    d.actuation = actuation(x, t);
    d.diffusion = diffusion(x, t);
    d.control_to_noise = control_to_noise(x, t);
    return d;
}

namespace {

void require_positive(double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw std::invalid_argument(std::string(what) + " must be positive and finite");
    }
}

}  // namespace

// Pendulum ------------------------------------------------------------------

Pendulum::Pendulum(PendulumParams params, double noise_scale)
    : DriftFromTemplate(2, 1, 1), params_(params), noise_scale_(noise_scale) {
    require_positive(params_.mass, "pendulum.mass");
    require_positive(params_.length, "pendulum.length");
    require_positive(noise_scale_, "noise scale");
}

Matrix Pendulum::actuation(std::span<const double>, double) const {
    return Matrix::from_rows({{0.0}, {1.0 / (params_.mass * params_.length * params_.length)}});
}

Matrix Pendulum::diffusion(std::span<const double>, double) const {
    return Matrix::from_rows({{0.0}, {noise_scale_}});
}

Matrix Pendulum::control_to_noise(std::span<const double>, double) const {
    return Matrix::from_rows(
        {{1.0 / (params_.mass * params_.length * params_.length * noise_scale_)}});
}

nlohmann::json Pendulum::constants() const {
    return {{"mass", params_.mass},
            {"length", params_.length},
            {"damping", params_.damping},
            {"gravity", params_.gravity},
            {"noise_scale", noise_scale_}};
}

// Quadcopter ----------------------------------------------------------------

Quadcopter::Quadcopter(QuadcopterParams params, double noise_scale)
    : DriftFromTemplate(12, 4, 4), params_(params), noise_scale_(noise_scale) {
    require_positive(params_.mass, "quadcopter.mass");
    require_positive(params_.inertia_x, "quadcopter.inertia_x");
    require_positive(params_.inertia_y, "quadcopter.inertia_y");
    require_positive(params_.inertia_z, "quadcopter.inertia_z");
    require_positive(noise_scale_, "noise scale");
}

namespace {
constexpr std::size_t kQuadChannels[4] = {8, 9, 10, 11};
}

Matrix Quadcopter::actuation(std::span<const double>, double) const {
    Matrix g(12, 4);
    g(8, 0) = 1.0 / params_.mass;
    g(9, 1) = 1.0 / params_.inertia_x;
    g(10, 2) = 1.0 / params_.inertia_y;
    g(11, 3) = 1.0 / params_.inertia_z;
    return g;
}

Matrix Quadcopter::diffusion(std::span<const double>, double) const {
    Matrix s(12, 4);
    for (std::size_t k = 0; k < 4; ++k) s(kQuadChannels[k], k) = noise_scale_;
    return s;
}

Matrix Quadcopter::control_to_noise(std::span<const double>, double) const {
    Matrix g(4, 4);
    g(0, 0) = 1.0 / (params_.mass * noise_scale_);
    g(1, 1) = 1.0 / (params_.inertia_x * noise_scale_);
    g(2, 2) = 1.0 / (params_.inertia_y * noise_scale_);
    g(3, 3) = 1.0 / (params_.inertia_z * noise_scale_);
    return g;
}

nlohmann::json Quadcopter::constants() const {
    return {{"mass", params_.mass},
            {"arm_length", params_.arm_length},
            {"inertia_x", params_.inertia_x},
            {"inertia_y", params_.inertia_y},
            {"inertia_z", params_.inertia_z},
            {"gravity", params_.gravity},
            {"noise_scale", noise_scale_}};
}

// Linear --------------------------------------------------------------------

LinearSystem::LinearSystem(Matrix a, Matrix b, double noise_scale)
    : SystemModel(a.rows(), b.cols(), b.cols()), a_(std::move(a)), b_(std::move(b)),
      noise_scale_(noise_scale) {
    if (a_.rows() != a_.cols() || b_.rows() != a_.rows()) {
        throw std::invalid_argument("lq: A must be n×n and B n×p, got A " + to_string(a_.shape()) +
                                    ", B " + to_string(b_.shape()));
    }
    require_positive(noise_scale_, "noise scale");
}

void LinearSystem::drift(std::span<const double> x, double, std::span<double> f) const {
    const std::size_t n = a_.rows();
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += a_(i, j) * x[j];
        f[i] = s;
    }
}

void LinearSystem::drift_jacobian(std::span<const double> x, double t, std::span<double> f,
                                  std::span<double> jac) const {
    drift(x, t, f);
    std::copy(a_.data(), a_.data() + a_.size(), jac.begin());
}

Matrix LinearSystem::diffusion(std::span<const double>, double) const {
    Matrix s = b_;
    for (auto& v : s.values()) v *= noise_scale_;
    return s;
}

Matrix LinearSystem::control_to_noise(std::span<const double>, double) const {
    Matrix g = Matrix::identity(b_.cols());
    for (auto& v : g.values()) v /= noise_scale_;
    return g;
}

namespace {

nlohmann::json to_json(const Matrix& m) {
    auto rows = nlohmann::json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = nlohmann::json::array();
        for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

Matrix matrix_from_json(const nlohmann::json& j, const char* what) {
    if (!j.is_array() || j.empty() || !j[0].is_array()) {
        throw std::invalid_argument(std::string(what) + " must be a nested array of rows");
    }
    Matrix m(j.size(), j[0].size());
    for (std::size_t r = 0; r < j.size(); ++r) {
        if (j[r].size() != m.cols()) throw std::invalid_argument(std::string(what) + ": ragged rows");
        for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = j[r][c].get<double>();
    }
    return m;
}

}  // namespace

nlohmann::json LinearSystem::constants() const {
    return {{"A", to_json(a_)}, {"B", to_json(b_)}, {"noise_scale", noise_scale_}};
}

// Registry ------------------------------------------------------------------

std::vector<std::string> registered_systems() { return {"pendulum", "quadcopter", "lq"}; }

nlohmann::json default_physics(std::string_view name) {
    if (name == "pendulum") {
        const PendulumParams p;
        return {{"mass", p.mass}, {"length", p.length}, {"damping", p.damping}, {"gravity", p.gravity}};
    }
    if (name == "quadcopter") {
        const QuadcopterParams p;
        return {{"mass", p.mass},           {"arm_length", p.arm_length}, {"inertia_x", p.inertia_x},
                {"inertia_y", p.inertia_y}, {"inertia_z", p.inertia_z},   {"gravity", p.gravity}};
    }
    if (name == "lq") {
        return {{"A", {{0.0, 1.0}, {0.0, 0.0}}}, {"B", {{0.0}, {1.0}}}};
    }
    throw std::invalid_argument("unknown system '" + std::string(name) + "'");
}

std::unique_ptr<SystemModel> make_system(std::string_view name, const nlohmann::json& physics,
                                         double noise_scale) {
    if (name == "pendulum") {
        PendulumParams p;
        p.mass = physics.at("mass").get<double>();
        p.length = physics.at("length").get<double>();
        p.damping = physics.at("damping").get<double>();
        p.gravity = physics.at("gravity").get<double>();
        return std::make_unique<Pendulum>(p, noise_scale);
    }
    if (name == "quadcopter") {
        QuadcopterParams p;
        p.mass = physics.at("mass").get<double>();
        p.arm_length = physics.at("arm_length").get<double>();
        p.inertia_x = physics.at("inertia_x").get<double>();
        p.inertia_y = physics.at("inertia_y").get<double>();
        p.inertia_z = physics.at("inertia_z").get<double>();
        p.gravity = physics.at("gravity").get<double>();
        return std::make_unique<Quadcopter>(p, noise_scale);
    }
    if (name == "lq") {
        return std::make_unique<LinearSystem>(matrix_from_json(physics.at("A"), "lq.A"),
                                              matrix_from_json(physics.at("B"), "lq.B"), noise_scale);
    }
    throw std::invalid_argument("unknown system '" + std::string(name) + "'");
}

}  // namespace mmfbsde::sys
