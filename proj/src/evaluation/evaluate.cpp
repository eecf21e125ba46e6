#include "mmfbsde/evaluation/evaluate.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <thread>

namespace mmfbsde::eval {
namespace {

using nlohmann::json;

constexpr double kBandZ = 1.96;

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct Collected {
    std::vector<Matrix> trajectories;  // valid samples only
    std::vector<double> terminal_costs;
    std::size_t diverged = 0;
    std::size_t adversary_evaluations = 0;
};

void collect(const core::RolloutRecord<Matrix>& rec, const std::vector<bool>& diverged, Collected& out) {
    const std::size_t steps = rec.x.size();
    const std::size_t n = rec.x.front().rows();
    for (std::size_t s = 0; s < diverged.size(); ++s) {
        if (diverged[s]) {
            ++out.diverged;
            continue;
        }
        Matrix traj(steps, n);
        for (std::size_t k = 0; k < steps; ++k)
            for (std::size_t j = 0; j < n; ++j) traj(k, j) = rec.x[k](j, s);
        out.trajectories.push_back(std::move(traj));
        out.terminal_costs.push_back(rec.y_star(0, s));
    }
}

ConditionReport build(const Collected& c, const core::RolloutContext& ctx, const SuccessCriterion& criterion) {
    ConditionReport r;
    const auto& grid = ctx.grid();
    const std::size_t steps = grid.steps + 1;
    const std::size_t n = ctx.system().state_dim();
    r.mode = ctx.config().mode == core::Mode::MinMax ? "minmax" : "baseline";
    r.adversary = ctx.adversary_active();
    r.epsilon = ctx.costs().epsilon;
    r.valid = c.trajectories.size();
    r.diverged = c.diverged;
    r.m_test = r.valid + r.diverged;
    r.adversary_evaluations = c.adversary_evaluations;
    for (std::size_t k = 0; k < steps; ++k) r.times.push_back(grid.time(k));

    const double nan = std::numeric_limits<double>::quiet_NaN();
    r.mean = Matrix(steps, n, nan);
    r.stddev = Matrix(steps, n, nan);
    r.total_variance = nan;
    r.mean_terminal_cost = nan;
    if (r.valid > 0) {
        // Accumulated as offsets from the first trajectory, as in
        // total_state_variance.
        const Matrix& ref = c.trajectories.front();
        r.mean.fill(0.0);
        for (const auto& t : c.trajectories)
            for (std::size_t i = 0; i < t.size(); ++i) r.mean[i] += t[i] - ref[i];
        for (std::size_t i = 0; i < r.mean.size(); ++i) r.mean[i] = ref[i] + r.mean[i] / static_cast<double>(r.valid);
        double cost = 0.0;
        for (double v : c.terminal_costs) cost += v;
        r.mean_terminal_cost = cost / static_cast<double>(r.valid);
    }
    if (r.valid > 1) {
        const Matrix& ref = c.trajectories.front();
        r.stddev.fill(0.0);
        for (const auto& t : c.trajectories)
            for (std::size_t i = 0; i < t.size(); ++i) {
                const double d = (t[i] - ref[i]) - (r.mean[i] - ref[i]);
                r.stddev[i] += d * d;
            }
        for (std::size_t i = 0; i < r.stddev.size(); ++i)
            r.stddev[i] = std::sqrt(r.stddev[i] / static_cast<double>(r.valid - 1));
        r.total_variance = total_state_variance(c.trajectories);
    }
    const auto last = r.mean.row(steps - 1);
    r.terminal_mean.assign(last.begin(), last.end());
    std::size_t hits = 0;
    for (const auto& t : c.trajectories)
        if (task_success(t, ctx.costs(), criterion)) ++hits;
    // Diverged samples count as failures.
    r.success_rate = r.m_test ? static_cast<double>(hits) / static_cast<double>(r.m_test) : 0.0;
    return r;
}

}  // namespace

SuccessCriterion SuccessCriterion::for_system(std::string_view system, std::size_t state_dim) {
    const double inf = std::numeric_limits<double>::infinity();
    SuccessCriterion c;
    c.tolerance.assign(state_dim, inf);
    if (system == "pendulum") {
        c.tolerance = {0.2, 1.0};
    } else if (system == "quadcopter") {
        for (std::size_t i = 0; i < 3; ++i) c.tolerance[i] = 0.25;
    } else {
        for (auto& t : c.tolerance) t = 0.25;
    }
    return c;
}

json SuccessCriterion::to_json() const {
    json j = json::array();
    for (double t : tolerance) j.push_back(finite_or_null(t));
    return j;
}

bool task_success(std::span<const double> terminal_state, const sys::CostSpec& costs,
                  const SuccessCriterion& criterion) {
    if (criterion.tolerance.size() != terminal_state.size())
        throw std::invalid_argument("task_success: tolerance has " + std::to_string(criterion.tolerance.size()) +
                                    " entries, state has " + std::to_string(terminal_state.size()));
    for (double v : terminal_state)
        if (!std::isfinite(v)) return false;
    const auto d = costs.deviation(terminal_state);
    for (std::size_t j = 0; j < d.size(); ++j)
        if (!(std::abs(d[j]) <= criterion.tolerance[j])) return false;
    return true;
}

bool task_success(const Matrix& trajectory, const sys::CostSpec& costs, const SuccessCriterion& criterion) {
    if (trajectory.rows() == 0) throw std::invalid_argument("task_success: empty trajectory");
    return task_success(trajectory.row(trajectory.rows() - 1), costs, criterion);
}

double total_state_variance(std::span<const Matrix> trajectories) {
    const std::size_t m = trajectories.size();
    if (m < 2) throw std::invalid_argument("total_state_variance: needs at least 2 trajectories, got " +
                                           std::to_string(m));
    const Shape shape = trajectories[0].shape();
    for (const auto& t : trajectories)
        if (t.shape() != shape)
            throw std::invalid_argument("total_state_variance: trajectory shapes differ (" + to_string(shape) +
                                        " vs " + to_string(t.shape()) + ")");
    // Deviations are taken from the first trajectory so identical inputs
    // give exactly zero.
    double total = 0.0;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        const double ref = trajectories[0][i];
        double mean = 0.0;
        for (const auto& t : trajectories) mean += t[i] - ref;
        mean /= static_cast<double>(m);
        double ss = 0.0;
        for (const auto& t : trajectories) ss += (t[i] - ref - mean) * (t[i] - ref - mean);
        total += ss / static_cast<double>(m - 1);
    }
    return total;
}

ConditionReport evaluate(const train::ParamStore& store, const core::RolloutContext& ctx, std::size_t m_test,
                         std::uint64_t seed, const SuccessCriterion& criterion, std::size_t workers,
                         std::size_t chunk) {
    if (m_test < 2) throw std::invalid_argument("evaluate: M_test must be at least 2");
    if (chunk < 1) chunk = m_test;
    const core::CounterNoise noise(seed, 0);
    const auto net = store.net();
    const auto z0 = store.z0();
    const std::size_t n_chunks = (m_test + chunk - 1) / chunk;
    std::vector<core::RolloutBatch> runs(n_chunks);
    auto work = [&](std::size_t first, std::size_t stride) {
        for (std::size_t c = first; c < n_chunks; c += stride) {
            std::vector<std::size_t> samples;
            for (std::size_t i = c * chunk; i < std::min(m_test, (c + 1) * chunk); ++i) samples.push_back(i);
            runs[c] = core::rollout_batch(net, store.y0(), z0, ctx, noise, samples);
        }
    };
    workers = std::max<std::size_t>(1, std::min(workers, n_chunks));
    if (workers == 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                try {
                    work(w, workers);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }
    Collected c;
    for (const auto& run : runs) {
        collect(run.record, run.diverged, c);
        c.adversary_evaluations += run.stats.adversary_evaluations;
    }
    auto report = build(c, ctx, criterion);
    report.seed = seed;
    return report;
}

ConditionReport summarize(const core::RolloutRecord<Matrix>& rec, const std::vector<bool>& diverged,
                          const core::RolloutContext& ctx, const SuccessCriterion& criterion) {
    Collected c;
    collect(rec, diverged, c);
    return build(c, ctx, criterion);
}

Comparison compare(const ConditionReport& treatment, const ConditionReport& reference) {
    Comparison c;
    c.treatment = treatment.label;
    c.reference = reference.label;
    c.treatment_variance = treatment.total_variance;
    c.reference_variance = reference.total_variance;
    c.reduction_percent = 100.0 * (1.0 - treatment.total_variance / reference.total_variance);
    return c;
}

json ConditionReport::to_json() const {
    json terminal = json::array();
    for (double v : terminal_mean) terminal.push_back(finite_or_null(v));
    return {{"label", label},
            {"mode", mode},
            {"adversary", adversary},
            {"epsilon", epsilon},
            {"seed", seed},
            {"m_test", m_test},
            {"valid", valid},
            {"diverged", diverged},
            {"adversary_evaluations", adversary_evaluations},
            {"total_state_variance", finite_or_null(total_variance)},
            {"mean_terminal_cost", finite_or_null(mean_terminal_cost)},
            {"success_rate", success_rate},
            {"terminal_mean", terminal}};
}

json EvalReport::to_json() const {
    json conds = json::array();
    for (const auto& c : conditions) conds.push_back(c.to_json());
    json comps = json::array();
    for (const auto& c : comparisons)
        comps.push_back({{"treatment", c.treatment},
                         {"reference", c.reference},
                         {"treatment_variance", finite_or_null(c.treatment_variance)},
                         {"reference_variance", finite_or_null(c.reference_variance)},
                         {"reduction_percent", finite_or_null(c.reduction_percent)}});
    return {{"schema", kReportSchema},
            {"system", system},
            {"success_tolerance", criterion.to_json()},
            {"conditions", conds},
            {"comparisons", comps},
            {"run", run}};
}

void write_trajectory_csv(const std::filesystem::path& path, const ConditionReport& r) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    const std::size_t n = r.mean.cols();
    out << "# " << kTrajectorySchema << " condition=" << r.label << "\n";
    out << "step,time";
    for (std::size_t j = 0; j < n; ++j) out << ",mean_" << j << ",std_" << j << ",lower_" << j << ",upper_" << j;
    out << "\n";
    for (std::size_t k = 0; k < r.mean.rows(); ++k) {
        out << k << ',' << fmt(r.times[k]);
        for (std::size_t j = 0; j < n; ++j) {
            const double m = r.mean(k, j), s = r.stddev(k, j);
            out << ',' << fmt(m) << ',' << fmt(s) << ',' << fmt(m - kBandZ * s) << ',' << fmt(m + kBandZ * s);
        }
        out << "\n";
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

void write_report(const std::filesystem::path& path, const EvalReport& report) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << report.to_json().dump(2) << '\n';
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<SweepRow> epsilon_sweep(std::span<const double> epsilons,
                                    const std::function<ConditionReport(double)>& train_and_evaluate,
                                    double run_success_rate) {
    for (double e : epsilons)
        if (!(e > 0.0)) throw std::invalid_argument("epsilon_sweep: every epsilon must be positive");
    std::vector<SweepRow> rows;
    for (double e : epsilons) {
        SweepRow row;
        row.epsilon = e;
        try {
            const auto r = train_and_evaluate(e);
            row.ok = true;
            row.total_variance = r.total_variance;
            row.success_rate = r.success_rate;
            row.mean_terminal_cost = r.mean_terminal_cost;
            row.diverged = r.diverged;
            row.success = r.success_rate >= run_success_rate;
        } catch (const std::exception& ex) {
            row.error = ex.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows,
                     const std::optional<ConditionReport>& baseline) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "# " << kSweepSchema << "\n";
    out << "epsilon,status,total_state_variance,success_rate,mean_terminal_cost,diverged,success,error\n";
    auto quote = [](std::string s) {
        for (auto& ch : s)
            if (ch == '"' || ch == '\n') ch = '\'';
        return '"' + s + '"';
    };
    if (baseline) {
        out << "inf,baseline," << fmt(baseline->total_variance) << ',' << fmt(baseline->success_rate) << ','
            << fmt(baseline->mean_terminal_cost) << ',' << baseline->diverged << ",,\n";
    }
    for (const auto& r : rows) {
        out << fmt(r.epsilon) << ',' << (r.ok ? "trained" : "failed") << ',' << fmt(r.total_variance) << ','
            << fmt(r.success_rate) << ',' << fmt(r.mean_terminal_cost) << ',' << r.diverged << ','
            << (r.success ? 1 : 0) << ',' << quote(r.error) << "\n";
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace mmfbsde::eval
