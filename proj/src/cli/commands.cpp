#include "mmfbsde/cli/commands.hpp"

#include "mmfbsde/cli/grad_audit.hpp"
#include "mmfbsde/evaluation/riccati.hpp"
#include "mmfbsde/kernels/kernels.hpp"
#include "mmfbsde/training/checkpoint.hpp"

#include <cmath>
#include <fstream>

#ifndef MMFBSDE_VERSION
#define MMFBSDE_VERSION "0.0.0"
#endif

namespace mmfbsde::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw CommandError("cannot create output directory " + dir.string());
    const auto probe = dir / ".write-probe";
    {
        std::ofstream out(probe);
        if (!out) throw CommandError("output directory is not writable: " + dir.string());
    }
    fs::remove(probe, ec);
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    out << j.dump(2) << '\n';
    if (!out) throw CommandError("cannot write " + path.string());
}

std::string eps_label(double e) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "eps_%g", e);
    return buf;
}

ExperimentConfig load_run_config(const fs::path& dir) {
    const auto path = dir / "resolved_config.json";
    std::ifstream in(path);
    if (!in) throw CommandError("run config not found: " + path.string());
    return ExperimentConfig::from_json(json::parse(in));
}

double rel_norm_error(std::span<const double> a, std::span<const double> ref) {
    double d = 0.0, r = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        d += (a[i] - ref[i]) * (a[i] - ref[i]);
        r += ref[i] * ref[i];
    }
    return std::sqrt(d) / std::sqrt(r);
}

}  // namespace

std::string version_string() { return std::string("mmfbsde ") + MMFBSDE_VERSION; }

void write_run_metadata(const ExperimentConfig& cfg, const fs::path& dir, const std::string& command) {
    ensure_dir(dir);
    write_json(dir / "resolved_config.json", cfg.to_json());
    write_json(dir / "run.json", {{"schema", "mmfbsde-run/1"},
                                  {"command", command},
                                  {"version", version_string()},
                                  {"kernels", kernels::active().name},
                                  {"config_hash", cfg.model_hash()},
                                  {"seeds",
                                   {{"train", cfg.train.seed},
                                    {"init", cfg.train.init_seed},
                                    {"eval", cfg.eval.seed}}},
                                  {"config", cfg.to_json()}});
}

TrainedRun train_run(const ExperimentConfig& cfg, const fs::path& dir, bool reuse, std::ostream* log) {
    const auto exp = Experiment::build(cfg);
    const std::string hash = cfg.model_hash();
    if (reuse && fs::exists(dir / "checkpoint" / "manifest.json")) {
        try {
            auto loaded = train::load_checkpoint(dir / "checkpoint", hash, exp->net_config());
            if (loaded.info.iteration == cfg.train.iterations) {
                if (log) *log << "reusing checkpoint in " << (dir / "checkpoint").string() << "\n";
                TrainedRun run;
                run.store = std::move(loaded.store);
                run.reused = true;
                return run;
            }
        } catch (const train::CheckpointError& e) {
            if (log) *log << "not reusing checkpoint: " << e.what() << "\n";
        }
    }
    write_run_metadata(cfg, dir, "train");
    const auto ctx = exp->context(true);
    const std::size_t every = std::max<std::size_t>(1, cfg.train.iterations / 10);
    auto progress = [&](const train::IterationLog& l) {
        if (log && (l.iteration % every == 0 || l.iteration == 1)) {
            *log << "iter " << l.iteration << "  loss " << l.loss << "  mean terminal cost "
                 << l.mean_terminal_cost << "  diverged " << l.divergences << "\n";
        }
    };
    auto result = train::train(exp->train_config(dir), ctx, exp->initial_store(), progress);
    TrainedRun run;
    run.store = std::move(result.store);
    run.history = std::move(result.history);
    run.aborted = result.aborted;
    run.abort_reason = result.abort_reason;
    if (log && result.rollbacks) *log << result.rollbacks << " steps rolled back\n";
    return run;
}

eval::ConditionReport evaluate_run(const ExperimentConfig& cfg, const train::ParamStore& store,
                                   const std::string& label) {
    const auto exp = Experiment::build(cfg);
    const auto ctx = exp->context(false);
    auto report = eval::evaluate(store, ctx, cfg.eval.m_test, cfg.eval.seed, exp->success_criterion(), cfg.workers,
                                 cfg.eval.chunk);
    report.label = label;
    return report;
}

json OracleResult::to_json() const {
    return {{"schema", "mmfbsde-oracle/1"},
            {"value", {{"riccati", riccati_value}, {"trained", trained_value}, {"relative_error", value_rel_error},
                       {"tolerance", 0.05}, {"passed", value_ok}}},
            {"z0", {{"riccati", riccati_z}, {"trained", trained_z}, {"relative_error", z_rel_error},
                    {"tolerance", 0.10}, {"passed", z_ok}}},
            {"scalar_riccati", {{"p0", scalar_p0}, {"expected", std::tanh(1.0)}, {"passed", scalar_ok}}},
            {"step_halving", {{"change", step_halving_change}, {"tolerance", 1e-8}, {"passed", halving_ok}}},
            {"bsde_consistency",
             {{"dt", consistency_dts}, {"mean_abs_terminal_error", consistency_errors}, {"passed", consistency_ok}}},
            {"passed", passed()}};
}

OracleResult oracle_check(const ExperimentConfig& cfg, const fs::path& dir, bool reuse, std::ostream* log) {
    if (cfg.system != "lq") throw CommandError("oracle-check needs the lq system (use --set system=lq)");
    const auto exp = Experiment::build(cfg);
    eval::LqBenchmark bench;
    const auto& lin = dynamic_cast<const sys::LinearSystem&>(*exp->system);
    bench.a = lin.a();
    bench.b = lin.b();
    bench.sigma = exp->system->diffusion(cfg.initial_state, cfg.horizon.t0);
    const std::size_t n = bench.a.rows();
    bench.q = Matrix(n, n);
    bench.q_final = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        bench.q(i, i) = cfg.costs.running_weights[i];
        bench.q_final(i, i) = cfg.costs.terminal_weights[i];
        if (cfg.costs.target[i] != 0.0) throw CommandError("oracle-check needs a zero target");
    }
    bench.r = cfg.costs.control_weight;
    bench.initial_state = cfg.initial_state;
    bench.t0 = cfg.horizon.t0;
    bench.horizon = cfg.horizon.horizon;
    bench.steps = cfg.horizon.steps;
    const double epsilon =
        cfg.mode == core::Mode::Baseline ? std::numeric_limits<double>::infinity() : cfg.costs.epsilon;

    OracleResult r;
    const auto ric = eval::riccati_oracle(bench, exp->grid, 10, epsilon);
    r.riccati_value = ric.value(bench.initial_state, 0);
    r.riccati_z = ric.z(bench.initial_state, 0);

    const auto fine = eval::riccati_oracle(bench, exp->grid, 20, epsilon);
    r.step_halving_change = 0.0;
    for (std::size_t i = 0; i < fine.p[0].size(); ++i)
        r.step_halving_change = std::max(r.step_halving_change, std::abs(fine.p[0][i] - ric.p[0][i]));
    r.halving_ok = r.step_halving_change < 1e-8;

    eval::LqBenchmark scalar;
    scalar.a = Matrix(1, 1, 0.0);
    scalar.b = Matrix(1, 1, 1.0);
    scalar.sigma = Matrix(1, 1, 0.0);
    scalar.q = Matrix(1, 1, 1.0);
    scalar.q_final = Matrix(1, 1, 0.0);
    scalar.r = Matrix(1, 1, 1.0);
    scalar.initial_state = {1.0};
    r.scalar_p0 = eval::riccati_oracle(scalar, core::HorizonGrid::make(0.0, 1.0, 50)).p[0][0];
    r.scalar_ok = std::abs(r.scalar_p0 - std::tanh(1.0)) < 1e-8;

    r.consistency_dts = {0.04, 0.02, 0.01};
    if (cfg.mode == core::Mode::Baseline) {
        r.consistency_errors = eval::bsde_consistency(bench, cfg.noise_scale, r.consistency_dts, 256, cfg.eval.seed);
        r.consistency_ok = r.consistency_errors[0] > r.consistency_errors[1] &&
                           r.consistency_errors[1] > r.consistency_errors[2];
    }

    const auto run = train_run(cfg, dir, reuse, log);
    if (run.aborted) throw CommandError("lq training aborted: " + run.abort_reason);
    r.trained_value = run.store.y0();
    r.trained_z = run.store.z0();
    r.value_rel_error = std::abs(r.trained_value - r.riccati_value) / std::abs(r.riccati_value);
    r.z_rel_error = rel_norm_error(r.trained_z, r.riccati_z);
    r.value_ok = r.value_rel_error <= 0.05;
    r.z_ok = r.z_rel_error <= 0.10;
    return r;
}

int cmd_train(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
    ensure_dir(out);
    const auto run = train_run(cfg, out, false, &log);
    if (run.aborted) {
        log << "training aborted: " << run.abort_reason << "\n";
        return 3;
    }
    log << "trained " << run.history.size() << " iterations; checkpoint in " << (out / "checkpoint").string()
        << "\n";
    return 0;
}

int cmd_eval(const ExperimentConfig& cfg, const fs::path& out, const std::optional<fs::path>& checkpoint,
             const std::optional<fs::path>& baseline_run, std::ostream& log) {
    const fs::path ckpt = checkpoint.value_or(out / "checkpoint");
    if (!fs::exists(ckpt / "manifest.json")) throw CommandError("checkpoint not found: " + ckpt.string());
    const auto exp = Experiment::build(cfg);
    const auto loaded = train::load_checkpoint(ckpt, cfg.model_hash(), exp->net_config());
    const fs::path eval_dir = out / "eval";
    ensure_dir(eval_dir);
    write_run_metadata(cfg, eval_dir, "eval");

    eval::EvalReport report;
    report.system = cfg.system;
    report.criterion = exp->success_criterion();
    report.run = {{"config_hash", cfg.model_hash()}, {"eval_seed", cfg.eval.seed}, {"m_test", cfg.eval.m_test}};
    const std::string label = cfg.mode == core::Mode::MinMax ? "rs" : "baseline";
    report.conditions.push_back(evaluate_run(cfg, loaded.store, label));

    if (baseline_run) {
        auto bcfg = load_run_config(*baseline_run);
        bcfg.eval = cfg.eval;
        bcfg.success = cfg.success;
        bcfg.workers = cfg.workers;
        const auto bexp = Experiment::build(bcfg);
        const auto bstore = train::load_checkpoint(*baseline_run / "checkpoint", bcfg.model_hash(), bexp->net_config());
        report.conditions.push_back(evaluate_run(bcfg, bstore.store, "reference"));
        report.comparisons.push_back(eval::compare(report.conditions[0], report.conditions[1]));
    }
    for (const auto& c : report.conditions) {
        eval::write_trajectory_csv(eval_dir / ("trajectory_" + c.label + ".csv"), c);
        log << c.label << ": total state variance " << c.total_variance << ", success rate " << c.success_rate
            << ", mean terminal cost " << c.mean_terminal_cost << ", diverged " << c.diverged << "\n";
    }
    for (const auto& c : report.comparisons)
        log << "variance reduction " << c.treatment << " vs " << c.reference << ": " << c.reduction_percent << "%\n";
    eval::write_report(eval_dir / "report.json", report);
    return 0;
}

int cmd_sweep(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
    const fs::path dir = out / "sweep";
    ensure_dir(dir);
    write_run_metadata(cfg, dir, "sweep");

    std::optional<eval::ConditionReport> baseline;
    {
        ExperimentConfig b = cfg;
        b.mode = core::Mode::Baseline;
        log << "baseline\n";
        try {
            const auto run = train_run(b, dir / "baseline", true, &log);
            if (!run.aborted) baseline = evaluate_run(b, run.store, "baseline");
        } catch (const std::exception& e) {
            log << "baseline failed: " << e.what() << "\n";
        }
    }
    auto one = [&](double e) {
        ExperimentConfig c = cfg;
        c.mode = core::Mode::MinMax;
        c.costs.epsilon = e;
        log << "epsilon " << e << "\n";
        const auto run = train_run(c, dir / eps_label(e), true, &log);
        if (run.aborted) throw CommandError("training aborted: " + run.abort_reason);
        return evaluate_run(c, run.store, eps_label(e));
    };
    const auto rows = eval::epsilon_sweep(cfg.sweep_epsilons, one, cfg.success.run_success_rate);
    eval::write_sweep_csv(dir / "sweep.csv", rows, baseline);
    for (const auto& r : rows) {
        log << "epsilon " << r.epsilon << ": " << (r.ok ? "trained" : "failed") << ", variance " << r.total_variance
            << ", success rate " << r.success_rate << (r.error.empty() ? "" : ", " + r.error) << "\n";
    }
    return 0;
}

int cmd_oracle_check(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
    ensure_dir(out);
    const auto r = oracle_check(cfg, out, false, &log);
    write_json(out / "oracle_report.json", r.to_json());
    log << "V(xi,0) riccati " << r.riccati_value << " trained " << r.trained_value << " (rel err "
        << r.value_rel_error << ")\n";
    log << "z0 rel err " << r.z_rel_error << "; scalar P(0) " << r.scalar_p0 << "; step halving "
        << r.step_halving_change << "\n";
    return r.passed() ? 0 : 1;
}

int cmd_grad_check(const ExperimentConfig& cfg, const fs::path& out, std::uint64_t seed, std::ostream& log) {
    ensure_dir(out);
    const auto items = gradient_audit(cfg, seed);
    const auto j = audit_json(items);
    write_json(out / "grad_check.json", j);
    for (const auto& it : items) {
        log << (it.passed ? "ok   " : "FAIL ") << it.name << "  max rel err " << it.max_relative_error << " over "
            << it.parameters << " parameters\n";
    }
    return j["passed"].get<bool>() ? 0 : 1;
}

}  // namespace mmfbsde::cli
