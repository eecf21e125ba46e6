#include "mmfbsde/cli/commands.hpp"
#include "mmfbsde/kernels/kernels.hpp"
#include "mmfbsde/training/checkpoint.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace fs = std::filesystem;
using namespace mmfbsde;

int main(int argc, char** argv) {
    CLI::App app{"Deep min-max FBSDE controller"};
    app.set_version_flag("--version", cli::version_string());
    app.require_subcommand(1);

    std::optional<std::string> config_path;
    std::vector<std::string> overrides;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    std::optional<std::string> mode;
    std::optional<std::string> checkpoint;
    std::optional<std::string> baseline;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "Config file (JSON)")->check(CLI::ExistingFile);
        sub->add_option("--set", overrides, "Override a config key: dotted.path=value (repeatable)");
        sub->add_option("--out", out_dir, "Output directory (defaults to the config's out)");
        sub->add_option("--seed", seed, "Training noise seed");
        sub->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--mode", mode, "minmax or baseline")->check(CLI::IsMember({"minmax", "baseline"}));
    };
    auto* train = app.add_subcommand("train", "Train a controller");
    auto* eval = app.add_subcommand("eval", "Evaluate a trained controller with the adversary off");
    auto* sweep = app.add_subcommand("sweep", "Train and evaluate across risk sensitivities");
    auto* oracle = app.add_subcommand("oracle-check", "Compare an LQ solve against the Riccati solution");
    auto* grad = app.add_subcommand("grad-check", "Audit gradients against central differences");
    for (auto* s : {train, eval, sweep, oracle, grad}) common(s);
    eval->add_option("--checkpoint", checkpoint, "Checkpoint directory (defaults to <out>/checkpoint)");
    eval->add_option("--baseline", baseline, "Run directory of a reference controller to compare against");

    CLI11_PARSE(app, argc, argv);

    try {
        std::vector<std::string> sets = overrides;
        if (seed) sets.push_back("train.seed=" + std::to_string(*seed));
        if (workers) sets.push_back("workers=" + std::to_string(*workers));
        if (mode) sets.push_back("mode=\"" + *mode + "\"");
        if (oracle->parsed() && !config_path) sets.insert(sets.begin(), "system=\"lq\"");
        std::optional<fs::path> cfg_file;
        if (config_path) cfg_file = fs::path(*config_path);
        const auto cfg = cli::parse_config(cfg_file, sets);
        const fs::path out = out_dir ? fs::path(*out_dir) : fs::path(cfg.out);
        if (cfg_file && fs::exists(out / "resolved_config.json") &&
            fs::equivalent(*cfg_file, out / "resolved_config.json") && !eval->parsed()) {
            throw cli::CommandError("--config points at this run's resolved_config.json, which the run rewrites; "
                                    "copy it or use a different --out");
        }
        std::cerr << "kernels: " << kernels::active().name << "\n";
        if (train->parsed()) return cli::cmd_train(cfg, out, std::cerr);
        if (eval->parsed()) {
            std::optional<fs::path> ck, base;
            if (checkpoint) ck = fs::path(*checkpoint);
            if (baseline) base = fs::path(*baseline);
            return cli::cmd_eval(cfg, out, ck, base, std::cerr);
        }
        if (sweep->parsed()) return cli::cmd_sweep(cfg, out, std::cerr);
        if (oracle->parsed()) return cli::cmd_oracle_check(cfg, out, std::cerr);
        if (grad->parsed()) return cli::cmd_grad_check(cfg, out, seed.value_or(12345), std::cerr);
    } catch (const cli::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
