#include "mmfbsde/cli/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace mmfbsde::cli {
namespace {

using nlohmann::json;

constexpr double kLowNoise = 0.1;
constexpr double kHighNoise = 0.8;

std::string join(const std::string& base, const std::string& key) { return base.empty() ? key : base + "." + key; }

std::string kind(const json& j) {
    if (j.is_number()) return "number";
    if (j.is_boolean()) return "boolean";
    if (j.is_string()) return "string";
    if (j.is_array()) return "array";
    if (j.is_object()) return "object";
    return "null";
}

void merge_into(json& base, const json& user, const std::string& path) {
    for (auto it = user.begin(); it != user.end(); ++it) {
        const std::string p = join(path, it.key());
        if (!base.contains(it.key())) throw ConfigError(p, "unknown key");
        json& target = base[it.key()];
        if (target.is_object()) {
            if (!it->is_object()) throw ConfigError(p, "expected object, got " + kind(*it));
            merge_into(target, *it, p);
            continue;
        }
        if (kind(target) != kind(*it)) throw ConfigError(p, "expected " + kind(target) + ", got " + kind(*it));
        target = *it;
    }
}

double num(const json& doc, const std::string& path) {
    const json* j = &doc;
    std::string part;
    std::istringstream ss(path);
    while (std::getline(ss, part, '.')) j = &j->at(part);
    if (!j->is_number()) throw ConfigError(path, "expected number, got " + kind(*j));
    return j->get<double>();
}

const json& at_path(const json& doc, const std::string& path) {
    const json* j = &doc;
    std::string part;
    std::istringstream ss(path);
    while (std::getline(ss, part, '.')) {
        if (!j->is_object() || !j->contains(part)) throw ConfigError(path, "missing key");
        j = &j->at(part);
    }
    return *j;
}

std::uint64_t unsigned_int(const json& doc, const std::string& path) {
    const json& j = at_path(doc, path);
    if (j.is_number_unsigned()) return j.get<std::uint64_t>();
    if (j.is_number_integer()) {
        if (j.get<std::int64_t>() < 0) throw ConfigError(path, "must be non-negative");
        return static_cast<std::uint64_t>(j.get<std::int64_t>());
    }
    if (j.is_number_float()) {
        const double v = j.get<double>();
        if (v >= 0.0 && v == std::floor(v) && v < 1.8e19) return static_cast<std::uint64_t>(v);
    }
    throw ConfigError(path, "expected non-negative integer");
}

std::string str(const json& doc, const std::string& path) {
    const json& j = at_path(doc, path);
    if (!j.is_string()) throw ConfigError(path, "expected string, got " + kind(j));
    return j.get<std::string>();
}

std::vector<double> vec(const json& doc, const std::string& path, bool allow_null = false) {
    const json& j = at_path(doc, path);
    if (!j.is_array()) throw ConfigError(path, "expected array, got " + kind(j));
    std::vector<double> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (allow_null && j[i].is_null()) {
            out.push_back(std::numeric_limits<double>::infinity());
        } else if (j[i].is_number()) {
            out.push_back(j[i].get<double>());
        } else {
            throw ConfigError(path + "[" + std::to_string(i) + "]", "expected number, got " + kind(j[i]));
        }
    }
    return out;
}

Matrix mat(const json& doc, const std::string& path) {
    const json& j = at_path(doc, path);
    if (!j.is_array() || j.empty()) throw ConfigError(path, "expected non-empty array of rows");
    const std::size_t rows = j.size();
    if (!j[0].is_array()) throw ConfigError(path + "[0]", "expected array");
    const std::size_t cols = j[0].size();
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        if (!j[r].is_array() || j[r].size() != cols)
            throw ConfigError(path + "[" + std::to_string(r) + "]", "expected a row of " + std::to_string(cols));
        for (std::size_t c = 0; c < cols; ++c) {
            if (!j[r][c].is_number())
                throw ConfigError(path + "[" + std::to_string(r) + "][" + std::to_string(c) + "]", "expected number");
            m(r, c) = j[r][c].get<double>();
        }
    }
    return m;
}

json mat_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

json tol_json(const std::vector<double>& tol) {
    json j = json::array();
    for (double t : tol) j.push_back(std::isfinite(t) ? json(t) : json(nullptr));
    return j;
}

void require(bool ok, const std::string& path, const std::string& what) {
    if (!ok) throw ConfigError(path, what);
}

// The LQ benchmark is scaled up so z carries a usable signal; its presets keep
// the same high/low ratio.
double preset_scale(const std::string& system, const std::string& preset) {
    const double unit = system == "lq" ? 10.0 : 1.0;
    if (preset == "low") return unit * kLowNoise;
    if (preset == "high") return unit * kHighNoise;
    return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

json default_config(const std::string& system, const std::string& preset) {
    const auto names = sys::registered_systems();
    if (std::find(names.begin(), names.end(), system) == names.end())
        throw ConfigError("system", "unknown system '" + system + "'");
    if (preset != "low" && preset != "high" && preset != "custom")
        throw ConfigError("noise.preset", "expected low, high or custom, got '" + preset + "'");
    const bool high = preset == "high";
    const double scale = preset_scale(system, preset == "custom" ? "low" : preset);

    json train = {{"iterations", 3000},
                  {"batch", 128},
                  {"chunk", 32},
                  {"learning_rate", 1e-3},
                  {"psi_learning_rate", 1e-2},
                  {"beta1", 0.9},
                  {"beta2", 0.999},
                  {"adam_epsilon", 1e-8},
                  {"grad_clip", 0.0},
                  {"max_divergence_fraction", 0.1},
                  {"checkpoint_every", 500},
                  {"seed", 1},
                  {"init_seed", 7}};
    json doc = {{"schema", kConfigSchema},
                {"system", system},
                {"physics", sys::default_physics(system)},
                {"noise", {{"preset", preset}, {"scale", scale}}},
                {"horizon", {{"t0", 0.0}}},
                {"network", {{"hidden1", 16}, {"hidden2", 16}, {"forget_bias", 1.0}}},
                {"train", train},
                {"eval", {{"m_test", 128}, {"seed", 1001}, {"chunk", 32}}},
                {"mode", "minmax"},
                {"out", "runs/" + system},
                {"workers", 1}};
    json costs = {{"beta", 0.8}, {"lambda", 1e-4}};

    if (system == "pendulum") {
        doc["initial_state"] = {0.0, 0.0};
        costs["running_weights"] = {1.0, 0.1};
        costs["terminal_weights"] = {100.0, 10.0};
        costs["target"] = {std::numbers::pi, 0.0};
        costs["control_weight"] = {{1.0}};
        // The adversary's authority σ²/ε stays near a tenth of the control's.
        costs["epsilon"] = high ? 6.4 : 0.1;
        doc["horizon"]["T"] = 1.5;
        doc["horizon"]["N"] = 75;
        doc["train"]["iterations"] = 2000;
        doc["train"]["psi_learning_rate"] = 0.1;
        doc["success"] = {{"tolerance", {0.2, 1.0}}, {"run_success_rate", 0.8}};
        doc["sweep"] = {{"epsilons", {0.005, 0.0125, 0.03, 0.1, 1.0, 100.0}}};
    } else if (system == "quadcopter") {
        doc["initial_state"] = std::vector<double>(12, 0.0);
        std::vector<double> run(12, 0.0), term(12, 0.0), target(12, 0.0);
        for (int i = 0; i < 3; ++i) {
            run[i] = 1.0;
            term[i] = 100.0;
            target[i] = 1.0;
        }
        for (int i = 3; i < 6; ++i) {
            run[i] = 1.0;
            term[i] = 10.0;
        }
        for (int i = 6; i < 12; ++i) {
            run[i] = 0.1;
            term[i] = 10.0;
        }
        costs["running_weights"] = run;
        costs["terminal_weights"] = term;
        costs["target"] = target;
        // Torque weights scale with the squared inertia so every channel has a
        // feedback gain G R⁻¹ Gᵀ near 0.4, as the thrust channel does. Cheaper
        // controls make a freshly initialized policy flip the vehicle.
        costs["control_weight"] = {{10.0, 0.0, 0.0, 0.0},
                                   {0.0, 160000.0, 0.0, 0.0},
                                   {0.0, 0.0, 160000.0, 0.0},
                                   {0.0, 0.0, 0.0, 50000.0}};
        costs["epsilon"] = high ? 20.0 : 0.3;
        doc["horizon"]["T"] = 2.0;
        doc["horizon"]["N"] = 100;
        doc["network"]["hidden1"] = 32;
        doc["network"]["hidden2"] = 32;
        doc["train"]["iterations"] = 2000;
        json tol = json::array();
        for (int i = 0; i < 12; ++i) tol.push_back(i < 3 ? json(0.25) : json(nullptr));
        doc["success"] = {{"tolerance", tol}, {"run_success_rate", 0.8}};
        doc["sweep"] = {{"epsilons", {0.005, 0.0125, 0.03, 0.1, 1.0, 100.0}}};
    } else {
        doc["initial_state"] = {1.0, 0.0};
        costs["running_weights"] = {1.0, 0.1};
        costs["terminal_weights"] = {10.0, 1.0};
        costs["target"] = {0.0, 0.0};
        costs["control_weight"] = {{1.0}};
        costs["epsilon"] = 1.0;
        doc["horizon"]["T"] = 1.0;
        doc["horizon"]["N"] = 50;
        doc["mode"] = "baseline";
        // β = 1 makes ỹ₀ an estimate of the policy's cost rather than a
        // blend that also shrinks the terminal value.
        costs["beta"] = 1.0;
        doc["train"]["iterations"] = 6000;
        doc["train"]["batch"] = 64;
        doc["success"] = {{"tolerance", {0.25, 0.25}}, {"run_success_rate", 0.8}};
        doc["sweep"] = {{"epsilons", json::array()}};
    }
    doc["costs"] = costs;
    return doc;
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError(assignment, "override must have the form key.path=value");
    const std::string path = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::parse_error&) {
        value = text;
    }
    json* node = &doc;
    std::string part;
    std::istringstream ss(path);
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!node->is_object()) throw ConfigError(path, "cannot descend into a non-object");
        node = &(*node)[parts[i]];
        if (node->is_null()) *node = json::object();
    }
    if (!node->is_object()) throw ConfigError(path, "cannot descend into a non-object");
    (*node)[parts.back()] = std::move(value);
}

ExperimentConfig parse_config_json(json user, const std::vector<std::string>& overrides) {
    if (user.is_null()) user = json::object();
    if (!user.is_object()) throw ConfigError("<root>", "config must be an object");
    for (const auto& o : overrides) apply_override(user, o);

    std::string system = "pendulum";
    if (user.contains("system")) {
        if (!user["system"].is_string()) throw ConfigError("system", "expected string, got " + kind(user["system"]));
        system = user["system"].get<std::string>();
    }
    std::string preset = "low";
    if (user.contains("noise") && user["noise"].is_object() && user["noise"].contains("preset")) {
        if (!user["noise"]["preset"].is_string()) throw ConfigError("noise.preset", "expected string");
        preset = user["noise"]["preset"].get<std::string>();
    }
    json doc = default_config(system, preset);
    merge_into(doc, user, "");

    // A named preset fixes the scale; an explicit scale needs "custom".
    if (preset != "custom" && user.contains("noise") && user["noise"].contains("scale") &&
        user["noise"]["scale"].get<double>() != preset_scale(system, preset)) {
        throw ConfigError("noise.scale", "conflicts with preset '" + preset + "'; use preset=custom");
    }
    if (preset == "custom" && !(user.contains("noise") && user["noise"].contains("scale")))
        throw ConfigError("noise.scale", "required when noise.preset is custom");
    return ExperimentConfig::from_json(doc);
}

ExperimentConfig parse_config(const std::optional<std::filesystem::path>& file,
                              const std::vector<std::string>& overrides) {
    json user = json::object();
    if (file) {
        std::ifstream in(*file);
        if (!in) throw ConfigError("--config", "cannot read " + file->string());
        std::stringstream buf;
        buf << in.rdbuf();
        const std::string text = buf.str();
        if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
            try {
                user = json::parse(text);
            } catch (const json::parse_error& e) {
                throw ConfigError("--config", file->string() + ": " + e.what());
            }
        }
    }
    return parse_config_json(std::move(user), overrides);
}

ExperimentConfig ExperimentConfig::from_json(const json& doc) {
    if (!doc.is_object()) throw ConfigError("<root>", "config must be an object");
    const json defaults = default_config(str(doc, "system"), str(doc, "noise.preset"));
    {
        json probe = defaults;
        merge_into(probe, doc, "");
    }
    if (str(doc, "schema") != kConfigSchema)
        throw ConfigError("schema", "expected '" + std::string(kConfigSchema) + "'");

    ExperimentConfig c;
    c.system = str(doc, "system");
    c.physics = at_path(doc, "physics");
    c.noise_preset = str(doc, "noise.preset");
    c.noise_scale = num(doc, "noise.scale");
    c.initial_state = vec(doc, "initial_state");
    c.costs.running_weights = vec(doc, "costs.running_weights");
    c.costs.terminal_weights = vec(doc, "costs.terminal_weights");
    c.costs.target = vec(doc, "costs.target");
    c.costs.control_weight = mat(doc, "costs.control_weight");
    c.costs.epsilon = num(doc, "costs.epsilon");
    c.costs.beta = num(doc, "costs.beta");
    c.costs.lambda = num(doc, "costs.lambda");
    c.horizon.t0 = num(doc, "horizon.t0");
    c.horizon.horizon = num(doc, "horizon.T");
    c.horizon.steps = unsigned_int(doc, "horizon.N");
    c.network.hidden1 = unsigned_int(doc, "network.hidden1");
    c.network.hidden2 = unsigned_int(doc, "network.hidden2");
    c.network.forget_bias = num(doc, "network.forget_bias");
    c.train.iterations = unsigned_int(doc, "train.iterations");
    c.train.batch = unsigned_int(doc, "train.batch");
    c.train.chunk = unsigned_int(doc, "train.chunk");
    c.train.learning_rate = num(doc, "train.learning_rate");
    c.train.psi_learning_rate = num(doc, "train.psi_learning_rate");
    c.train.beta1 = num(doc, "train.beta1");
    c.train.beta2 = num(doc, "train.beta2");
    c.train.adam_epsilon = num(doc, "train.adam_epsilon");
    c.train.grad_clip = num(doc, "train.grad_clip");
    c.train.max_divergence_fraction = num(doc, "train.max_divergence_fraction");
    c.train.checkpoint_every = unsigned_int(doc, "train.checkpoint_every");
    c.train.seed = unsigned_int(doc, "train.seed");
    c.train.init_seed = unsigned_int(doc, "train.init_seed");
    c.eval.m_test = unsigned_int(doc, "eval.m_test");
    c.eval.seed = unsigned_int(doc, "eval.seed");
    c.eval.chunk = unsigned_int(doc, "eval.chunk");
    c.success.tolerance = vec(doc, "success.tolerance", true);
    c.success.run_success_rate = num(doc, "success.run_success_rate");
    c.sweep_epsilons = vec(doc, "sweep.epsilons");
    const std::string mode = str(doc, "mode");
    if (mode == "minmax") {
        c.mode = core::Mode::MinMax;
    } else if (mode == "baseline") {
        c.mode = core::Mode::Baseline;
    } else {
        throw ConfigError("mode", "expected minmax or baseline, got '" + mode + "'");
    }
    c.out = str(doc, "out");
    c.workers = unsigned_int(doc, "workers");

    // Range checks.
    const std::size_t n = defaults["initial_state"].size();
    require(c.noise_scale > 0.0 && std::isfinite(c.noise_scale), "noise.scale", "must be positive");
    require(c.initial_state.size() == n, "initial_state", "expected " + std::to_string(n) + " entries");
    require(c.costs.running_weights.size() == n, "costs.running_weights", "expected " + std::to_string(n) + " entries");
    require(c.costs.terminal_weights.size() == n, "costs.terminal_weights", "expected " + std::to_string(n) + " entries");
    require(c.costs.target.size() == n, "costs.target", "expected " + std::to_string(n) + " entries");
    for (double w : c.costs.running_weights) require(w >= 0.0, "costs.running_weights", "must be non-negative");
    for (double w : c.costs.terminal_weights) require(w >= 0.0, "costs.terminal_weights", "must be non-negative");
    require(c.costs.epsilon > 0.0, "costs.epsilon", "must be positive");
    require(c.costs.beta >= 0.0 && c.costs.beta <= 1.0, "costs.beta", "must lie in [0, 1]");
    require(c.costs.lambda >= 0.0, "costs.lambda", "must be non-negative");
    require(c.horizon.horizon > c.horizon.t0, "horizon.T", "must exceed horizon.t0");
    require(c.horizon.steps >= 1, "horizon.N", "must be at least 1");
    require(c.network.hidden1 >= 1, "network.hidden1", "must be at least 1");
    require(c.network.hidden2 >= 1, "network.hidden2", "must be at least 1");
    require(c.train.iterations >= 1, "train.iterations", "must be at least 1");
    require(c.train.batch >= 1, "train.batch", "must be at least 1");
    require(c.train.chunk >= 1, "train.chunk", "must be at least 1");
    require(c.train.learning_rate >= 0.0, "train.learning_rate", "must be non-negative");
    require(c.train.psi_learning_rate >= 0.0, "train.psi_learning_rate", "must be non-negative");
    require(c.train.beta1 >= 0.0 && c.train.beta1 < 1.0, "train.beta1", "must lie in [0, 1)");
    require(c.train.beta2 >= 0.0 && c.train.beta2 < 1.0, "train.beta2", "must lie in [0, 1)");
    require(c.train.adam_epsilon > 0.0, "train.adam_epsilon", "must be positive");
    require(c.train.grad_clip >= 0.0, "train.grad_clip", "must be non-negative");
    require(c.train.max_divergence_fraction >= 0.0 && c.train.max_divergence_fraction <= 1.0,
            "train.max_divergence_fraction", "must lie in [0, 1]");
    require(c.eval.m_test >= 2, "eval.m_test", "must be at least 2");
    require(c.eval.chunk >= 1, "eval.chunk", "must be at least 1");
    require(c.success.tolerance.size() == n, "success.tolerance", "expected " + std::to_string(n) + " entries");
    for (double t : c.success.tolerance) require(t >= 0.0, "success.tolerance", "must be non-negative");
    require(c.success.run_success_rate >= 0.0 && c.success.run_success_rate <= 1.0, "success.run_success_rate",
            "must lie in [0, 1]");
    for (double e : c.sweep_epsilons) require(e > 0.0, "sweep.epsilons", "every epsilon must be positive");
    require(c.workers >= 1, "workers", "must be at least 1");
    require(!c.out.empty(), "out", "must not be empty");

    // Physics and cost matrices are checked by the objects that use them.
    try {
        auto system = sys::make_system(c.system, c.physics, c.noise_scale);
        sys::CostSpec spec;
        spec.running_weights = c.costs.running_weights;
        spec.terminal_weights = c.costs.terminal_weights;
        spec.target = c.costs.target;
        spec.control_weight = c.costs.control_weight;
        spec.epsilon = c.costs.epsilon;
        spec.beta = c.costs.beta;
        spec.lambda = c.costs.lambda;
        spec.validate(system->state_dim(), system->control_dim());
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError("costs", e.what());
    }
    return c;
}

json ExperimentConfig::to_json() const {
    json physics_copy = physics;
    return {{"schema", kConfigSchema},
            {"system", system},
            {"physics", physics_copy},
            {"noise", {{"preset", noise_preset}, {"scale", noise_scale}}},
            {"initial_state", initial_state},
            {"costs",
             {{"running_weights", costs.running_weights},
              {"terminal_weights", costs.terminal_weights},
              {"target", costs.target},
              {"control_weight", mat_json(costs.control_weight)},
              {"epsilon", costs.epsilon},
              {"beta", costs.beta},
              {"lambda", costs.lambda}}},
            {"horizon", {{"t0", horizon.t0}, {"T", horizon.horizon}, {"N", horizon.steps}}},
            {"network",
             {{"hidden1", network.hidden1}, {"hidden2", network.hidden2}, {"forget_bias", network.forget_bias}}},
            {"train",
             {{"iterations", train.iterations},
              {"batch", train.batch},
              {"chunk", train.chunk},
              {"learning_rate", train.learning_rate},
              {"psi_learning_rate", train.psi_learning_rate},
              {"beta1", train.beta1},
              {"beta2", train.beta2},
              {"adam_epsilon", train.adam_epsilon},
              {"grad_clip", train.grad_clip},
              {"max_divergence_fraction", train.max_divergence_fraction},
              {"checkpoint_every", train.checkpoint_every},
              {"seed", train.seed},
              {"init_seed", train.init_seed}}},
            {"eval", {{"m_test", eval.m_test}, {"seed", eval.seed}, {"chunk", eval.chunk}}},
            {"success", {{"tolerance", tol_json(success.tolerance)}, {"run_success_rate", success.run_success_rate}}},
            {"sweep", {{"epsilons", sweep_epsilons}}},
            {"mode", mode == core::Mode::MinMax ? "minmax" : "baseline"},
            {"out", out},
            {"workers", workers}};
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string ExperimentConfig::model_hash() const {
    json j = to_json();
    for (const char* k : {"eval", "success", "sweep", "out", "workers"}) j.erase(k);
    j["train"].erase("checkpoint_every");
    return fnv1a_hex(j.dump());
}

std::unique_ptr<Experiment> Experiment::build(const ExperimentConfig& cfg) {
    auto e = std::make_unique<Experiment>();
    e->config = cfg;
    e->system = sys::make_system(cfg.system, cfg.physics, cfg.noise_scale);
    e->costs = std::make_unique<sys::CostSpec>();
    auto& c = *e->costs;
    c.running_weights = cfg.costs.running_weights;
    c.terminal_weights = cfg.costs.terminal_weights;
    c.target = cfg.costs.target;
    c.angle_states = e->system->angle_states();
    c.control_weight = cfg.costs.control_weight;
    c.epsilon = cfg.costs.epsilon;
    c.beta = cfg.costs.beta;
    c.lambda = cfg.costs.lambda;
    c.validate(e->system->state_dim(), e->system->control_dim());
    e->grid = core::HorizonGrid::make(cfg.horizon.t0, cfg.horizon.horizon, cfg.horizon.steps);
    return e;
}

core::RolloutContext Experiment::context(bool adversary) const {
    core::RolloutConfig rc;
    rc.system = system.get();
    rc.costs = costs.get();
    rc.grid = grid;
    rc.initial_state = config.initial_state;
    rc.mode = config.mode;
    rc.adversary = adversary;
    return core::RolloutContext(std::move(rc));
}

nn::NetConfig Experiment::net_config() const {
    nn::NetConfig n;
    n.state_dim = system->state_dim();
    n.hidden1 = config.network.hidden1;
    n.hidden2 = config.network.hidden2;
    n.out_dim = system->noise_dim();
    n.forget_bias = config.network.forget_bias;
    return n;
}

nn::AdamConfig Experiment::adam_config() const {
    return {config.train.learning_rate, config.train.beta1, config.train.beta2, config.train.adam_epsilon};
}

train::ParamStore Experiment::initial_store() const {
    return train::ParamStore::create(net_config(), config.train.init_seed, adam_config(),
                                     config.train.psi_learning_rate);
}

train::TrainConfig Experiment::train_config(const std::filesystem::path& out_dir) const {
    train::TrainConfig t;
    t.iterations = config.train.iterations;
    t.batch = config.train.batch;
    t.chunk = config.train.chunk;
    t.workers = config.workers;
    t.seed = config.train.seed;
    t.adam = adam_config();
    t.grad_clip = config.train.grad_clip;
    t.max_divergence_fraction = config.train.max_divergence_fraction;
    t.checkpoint_every = config.train.checkpoint_every;
    t.out_dir = out_dir;
    t.config_hash = config.model_hash();
    return t;
}

eval::SuccessCriterion Experiment::success_criterion() const { return {config.success.tolerance}; }

}  // namespace mmfbsde::cli
