// End-to-end acceptance run. Prints one PASS or FAIL line per criterion and
// exits nonzero when any fails. The lines are also written to summary.txt in
// the work directory. Trained runs are cached there by config hash, so
// repeated invocations only evaluate.
//
// usage: acceptance [--work DIR] [--only N[,N...]] [--skip N[,N...]]

#include "mmfbsde/cli/commands.hpp"
#include "mmfbsde/cli/config.hpp"
#include "mmfbsde/cli/grad_audit.hpp"
#include "mmfbsde/core/noise.hpp"
#include "mmfbsde/core/rollout.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace mmfbsde;

namespace {

struct Outcome {
    bool passed = false;
    std::string detail;
};

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

cli::ExperimentConfig config(const std::string& system, const std::vector<std::string>& overrides = {}) {
    std::vector<std::string> all = {"system=" + system};
    all.insert(all.end(), overrides.begin(), overrides.end());
    return cli::parse_config(std::nullopt, all);
}

class Runner {
public:
    explicit Runner(fs::path work) : work_(std::move(work)) {
        fs::create_directories(work_);
        log_.open(work_ / "acceptance.log", std::ios::app);
    }

    std::ostream& log() { return log_; }

    // Trains or reuses the run for `cfg` and evaluates it with the adversary off.
    eval::ConditionReport trained_eval(const cli::ExperimentConfig& cfg, const std::string& label) {
        const fs::path dir = work_ / "runs" / cfg.model_hash();
        log_ << "== " << label << " (" << dir.string() << ")\n";
        const auto run = cli::train_run(cfg, dir, true, &log_);
        if (run.aborted) throw cli::CommandError(label + " training aborted: " + run.abort_reason);
        auto report = cli::evaluate_run(cfg, run.store, label);
        log_ << label << ": success " << report.success_rate << " variance " << report.total_variance << "\n";
        log_.flush();
        return report;
    }

    const fs::path& work() const { return work_; }

private:
    fs::path work_;
    std::ofstream log_;
};

Outcome gradient_audit() {
    double worst = 0.0;
    bool ok = true;
    std::string worst_name;
    for (const char* system : {"pendulum", "quadcopter", "lq"}) {
        for (const auto& it : cli::gradient_audit(config(system), 1)) {
            ok = ok && it.passed && it.max_relative_error < 1e-4;
            if (it.max_relative_error >= worst) {
                worst = it.max_relative_error;
                worst_name = it.name;
            }
        }
    }
    return {ok, "max relative error " + fmt(worst) + " (" + worst_name + ")"};
}

Outcome lq_value(const cli::OracleResult& r) {
    const bool ok = r.value_ok && r.scalar_ok;
    return {ok, "trained y0 " + fmt(r.trained_value) + " vs Riccati " + fmt(r.riccati_value) + " (rel err " +
                    fmt(r.value_rel_error) + "), scalar P(0) " + fmt(r.scalar_p0)};
}

Outcome risk_neutral_limit() {
    const auto rs_cfg = config("pendulum", {"costs.epsilon=1e12", "mode=minmax"});
    const auto base_cfg = config("pendulum", {"costs.epsilon=1e12", "mode=baseline"});
    const auto rs = cli::Experiment::build(rs_cfg);
    const auto base = cli::Experiment::build(base_cfg);
    const auto store = rs->initial_store();
    std::vector<std::size_t> samples(64);
    std::iota(samples.begin(), samples.end(), std::size_t{0});
    const core::CounterNoise noise(rs_cfg.train.seed, 0);
    const auto z0 = store.z0();
    const auto a = core::rollout_batch(store.net(), store.y0(), z0, rs->context(true), noise, samples);
    const auto b = core::rollout_batch(store.net(), store.y0(), z0, base->context(true), noise, samples);

    double worst = 0.0;
    auto cmp = [&](const std::vector<Matrix>& p, const std::vector<Matrix>& q) {
        if (p.size() != q.size()) worst = INFINITY;
        for (std::size_t k = 0; k < std::min(p.size(), q.size()); ++k)
            for (std::size_t i = 0; i < p[k].size(); ++i) worst = std::max(worst, std::abs(p[k][i] - q[k][i]));
    };
    cmp(a.record.x, b.record.x);
    cmp(a.record.y, b.record.y);
    cmp(a.record.z, b.record.z);
    cmp(a.record.u, b.record.u);
    cmp(a.record.w, b.record.w);
    cmp({a.record.y_star}, {b.record.y_star});
    const bool ok = worst <= 1e-6 && a.stats.adversary_evaluations > 0;
    return {ok, "max abs difference " + fmt(worst) + " over x, y, z, u, w and g(x_N)"};
}

Outcome consistency(const cli::OracleResult& r) {
    std::string d = "mean |y_N - g(x_N)|";
    for (std::size_t i = 0; i < r.consistency_errors.size(); ++i)
        d += " " + fmt(r.consistency_errors[i]) + " (dt " + fmt(r.consistency_dts[i]) + ")";
    return {r.consistency_ok, d};
}

Outcome determinism(Runner& run) {
    const auto cfg = config("pendulum", {"train.iterations=30", "train.batch=32", "eval.m_test=64"});
    const fs::path root = run.work() / "determinism";
    fs::remove_all(root);
    std::ostringstream sink;
    const fs::path a = root / "a", b = root / "b", c = root / "c";
    auto cfg_workers = cfg;
    cfg_workers.workers = 2;
    if (cli::cmd_train(cfg, a, sink) != 0 || cli::cmd_train(cfg, b, sink) != 0 ||
        cli::cmd_train(cfg_workers, c, sink) != 0)
        return {false, "training failed"};
    const bool loss_same = read_file(a / "loss.csv") == read_file(b / "loss.csv") &&
                           read_file(a / "loss.csv") == read_file(c / "loss.csv") &&
                           !read_file(a / "loss.csv").empty();
    const fs::path e1 = root / "e1", e2 = root / "e2";
    cli::cmd_eval(cfg, e1, a / "checkpoint", std::nullopt, sink);
    cli::cmd_eval(cfg_workers, e2, a / "checkpoint", std::nullopt, sink);
    const std::string r1 = read_file(e1 / "eval" / "report.json");
    const bool report_same = !r1.empty() && r1 == read_file(e2 / "eval" / "report.json");
    return {loss_same && report_same, std::string("loss CSVs ") + (loss_same ? "identical" : "differ") +
                                          " across runs and worker counts, eval reports " +
                                          (report_same ? "identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mmfbsde acceptance run"};
    std::string work = "acceptance_work";
    std::vector<int> only, skip;
    app.add_option("--work", work, "directory for cached runs and logs");
    app.add_option("--only", only, "criteria to run")->delimiter(',');
    app.add_option("--skip", skip, "criteria to skip")->delimiter(',');
    CLI11_PARSE(app, argc, argv);

    Runner runner{fs::path(work)};
    const std::set<int> only_set(only.begin(), only.end()), skip_set(skip.begin(), skip.end());
    auto wanted = [&](int n) { return !skip_set.count(n) && (only_set.empty() || only_set.count(n)); };

    std::ofstream summary(runner.work() / "summary.txt");
    auto emit = [&](const std::string& line) {
        std::printf("%s\n", line.c_str());
        std::fflush(stdout);
        summary << line << "\n" << std::flush;
    };

    int failures = 0;
    auto report = [&](int n, const std::string& name, const auto& fn) {
        if (!wanted(n)) {
            emit("SKIP " + std::to_string(n) + " " + name);
            return;
        }
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (!o.passed) ++failures;
        char elapsed[32];
        std::snprintf(elapsed, sizeof elapsed, " [%.0f s]", secs);
        emit(std::string(o.passed ? "PASS " : "FAIL ") + std::to_string(n) + " " + name + ": " + o.detail + elapsed);
    };

    std::optional<cli::OracleResult> oracle;
    auto lq = [&]() -> const cli::OracleResult& {
        if (!oracle) {
            const auto cfg = config("lq");
            oracle = cli::oracle_check(cfg, runner.work() / "runs" / cfg.model_hash(), true, &runner.log());
        }
        return *oracle;
    };

    std::optional<eval::ConditionReport> pend_rs, pend_base;
    auto rs = [&]() -> const eval::ConditionReport& {
        if (!pend_rs) pend_rs = runner.trained_eval(config("pendulum"), "pendulum-rs");
        return *pend_rs;
    };
    auto base = [&]() -> const eval::ConditionReport& {
        if (!pend_base) pend_base = runner.trained_eval(config("pendulum", {"mode=baseline"}), "pendulum-baseline");
        return *pend_base;
    };

    report(1, "gradient audit", [&] { return gradient_audit(); });
    report(2, "LQ value vs Riccati", [&] { return lq_value(lq()); });
    report(3, "risk-neutral limit", [&] { return risk_neutral_limit(); });
    report(4, "BSDE consistency order", [&] { return consistency(lq()); });
    report(5, "pendulum swing-up", [&] {
        const auto& r = rs();
        return Outcome{r.success_rate >= 0.8, "success rate " + fmt(r.success_rate) + " over " +
                                                  std::to_string(r.m_test) + " trajectories"};
    });
    report(6, "pendulum variance reduction", [&] {
        const auto c = eval::compare(rs(), base());
        return Outcome{c.reduction_percent >= 5.0, "variance rs " + fmt(c.treatment_variance) + " vs baseline " +
                                                       fmt(c.reference_variance) + " (" +
                                                       fmt(c.reduction_percent) + "% reduction)"};
    });
    report(7, "epsilon sweep shape", [&] {
        const auto cfg = config("pendulum");
        const double run_rate = cfg.success.run_success_rate;
        const auto rows = eval::epsilon_sweep(
            cfg.sweep_epsilons,
            [&](double e) {
                return runner.trained_eval(config("pendulum", {"costs.epsilon=" + std::to_string(e)}),
                                           "sweep-" + fmt(e));
            },
            run_rate);
        const double vb = base().total_variance;
        bool intermediate = false;
        std::string d;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto& r = rows[i];
            d += (i ? ", " : "") + fmt(r.epsilon) + (r.success ? " ok " : " fail ") + fmt(r.success_rate);
            if (i > 0 && i + 1 < rows.size() && r.success && r.total_variance <= vb) intermediate = true;
        }
        const bool smallest_fails = rows.size() >= 5 && !rows.front().success;
        return Outcome{smallest_fails && intermediate, d + "; baseline variance " + fmt(vb)};
    });
    report(8, "determinism", [&] { return determinism(runner); });
    report(9, "quadcopter reach (stretch)", [&] {
        const auto r = runner.trained_eval(config("quadcopter"), "quadcopter-rs");
        return Outcome{r.success_rate >= 0.5, "success rate " + fmt(r.success_rate) + " over " +
                                                  std::to_string(r.m_test) + " trajectories"};
    });

    emit(std::to_string(failures) + " criteria failed");
    return failures == 0 ? 0 : 1;
}
