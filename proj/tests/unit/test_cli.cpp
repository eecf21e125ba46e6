#include "mmfbsde/cli/commands.hpp"
#include "mmfbsde/cli/config.hpp"
#include "mmfbsde/cli/grad_audit.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mmfbsde;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("mmfbsde_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// Runs the command-line tool, capturing stderr into `log`.
int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(MMFBSDE_CLI_PATH) + " " + args + " > /dev/null 2> " + log.string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

template <class F>
std::string config_error_path(F f) {
    try {
        f();
    } catch (const cli::ConfigError& e) {
        return e.path();
    }
    return "<no error>";
}

}  // namespace

TEST_CASE("a config naming only the system resolves to the defaults") {
    for (const std::string system : {"pendulum", "quadcopter", "lq"}) {
        const auto cfg = cli::parse_config_json({{"system", system}});
        const auto defaults = cli::parse_config_json(cli::default_config(system));
        CHECK(cfg.to_json() == defaults.to_json());
        CHECK(cfg.model_hash() == defaults.model_hash());
    }
    const auto p = cli::parse_config_json({{"system", "pendulum"}});
    CHECK(p.noise_scale == 0.1);
    CHECK(p.horizon.steps == 75);
    CHECK(p.train.iterations == 2000);
    CHECK(p.train.batch == 128);
    CHECK(p.network.hidden1 == 16);
    const auto q = cli::parse_config_json({{"system", "quadcopter"}});
    CHECK(q.network.hidden1 == 32);
    CHECK(q.train.iterations == 2000);
    CHECK(q.initial_state.size() == 12);
}

TEST_CASE("config round-trips through json") {
    auto cfg = cli::parse_config_json({{"system", "pendulum"}}, {"costs.epsilon=0.5", "train.iterations=7"});
    CHECK(cfg.costs.epsilon == 0.5);
    CHECK(cfg.train.iterations == 7);
    const auto again = cli::parse_config_json(cfg.to_json());
    CHECK(again.to_json() == cfg.to_json());
    CHECK(again.model_hash() == cfg.model_hash());
}

TEST_CASE("config errors name the offending key") {
    CHECK(config_error_path([] { cli::parse_config_json({{"system", "pendulum"}}, {"costs.epsilon=-1"}); }) ==
          "costs.epsilon");
    CHECK(config_error_path([] { cli::parse_config_json({{"system", "pendulum"}, {"bogus", 1}}); }) == "bogus");
    CHECK(config_error_path([] { cli::parse_config_json({{"system", "pendulum"}}, {"train.batch=\"many\""}); }) ==
          "train.batch");
    CHECK(config_error_path([] { cli::parse_config_json({{"system", "cartpole"}}); }) == "system");
    CHECK(config_error_path([] { cli::parse_config_json({{"system", "pendulum"}}, {"costs.beta=2"}); }) ==
          "costs.beta");
    CHECK(config_error_path([] {
              cli::parse_config_json({{"system", "pendulum"}}, {"costs.running_weights=[1,2,3]"});
          }) == "costs.running_weights");
    CHECK(config_error_path([] { cli::parse_config_json({{"system", "pendulum"}}, {"horizon.T=-1"}); }) != "<no error>");
}

TEST_CASE("noise presets") {
    CHECK(cli::parse_config_json({{"system", "pendulum"}, {"noise", {{"preset", "high"}}}}).noise_scale == 0.8);
    CHECK(cli::parse_config_json({{"system", "pendulum"}}, {"noise.preset=\"custom\"", "noise.scale=0.3"}).noise_scale ==
          0.3);
    CHECK_THROWS_AS(cli::parse_config_json({{"system", "pendulum"}}, {"noise.preset=\"custom\""}), cli::ConfigError);
    CHECK(cli::parse_config_json({{"system", "lq"}}).noise_scale == 1.0);
    CHECK(cli::parse_config_json({{"system", "lq"}}, {"noise.scale=1.0"}).noise_scale == 1.0);
    CHECK_THROWS_AS(cli::parse_config_json({{"system", "lq"}}, {"noise.scale=0.1"}), cli::ConfigError);
}

TEST_CASE("the model hash ignores evaluation and bookkeeping keys") {
    const auto base = cli::parse_config_json({{"system", "pendulum"}});
    const auto eval = cli::parse_config_json({{"system", "pendulum"}}, {"eval.m_test=64", "workers=3", "out=\"x\""});
    const auto model = cli::parse_config_json({{"system", "pendulum"}}, {"costs.epsilon=0.5"});
    CHECK(base.model_hash() == eval.model_hash());
    CHECK(base.model_hash() != model.model_hash());
    CHECK(cli::fnv1a_hex("") == "cbf29ce484222325");
    CHECK(cli::fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("the gradient audit passes on the default pendulum") {
    const auto cfg = cli::parse_config_json({{"system", "pendulum"}});
    const auto items = cli::gradient_audit(cfg, 12345);
    REQUIRE(items.size() >= 14);
    for (const auto& item : items) CHECK_MESSAGE(item.passed, item.name << " " << item.max_relative_error);
    CHECK(cli::audit_json(items)["schema"] == "mmfbsde-grad-check/1");
}

TEST_CASE("eval without a checkpoint fails cleanly") {
    const fs::path dir = scratch("nockpt");
    const int code = run_cli("eval --out " + dir.string(), dir / "log.txt");
    CHECK(code != 0);
    CHECK(slurp(dir / "log.txt").find("checkpoint not found") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("a config error exits with status 2") {
    const fs::path dir = scratch("badcfg");
    CHECK(run_cli("train --out " + dir.string() + " --set costs.epsilon=-1", dir / "log.txt") == 2);
    CHECK(slurp(dir / "log.txt").find("costs.epsilon") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("two identical training runs write identical loss files") {
    const fs::path dir = scratch("determinism");
    const std::string args = " --set train.iterations=4 --set train.batch=8 --set horizon.N=10";
    REQUIRE(run_cli("train --out " + (dir / "a").string() + args, dir / "a.log") == 0);
    REQUIRE(run_cli("train --out " + (dir / "b").string() + args + " --workers 2", dir / "b.log") == 0);
    const std::string a = slurp(dir / "a" / "loss.csv");
    CHECK(a.find("# mmfbsde-loss/1") == 0);
    CHECK(a == slurp(dir / "b" / "loss.csv"));
    CHECK(slurp(dir / "a" / "checkpoint" / "params.bin") == slurp(dir / "b" / "checkpoint" / "params.bin"));
    const auto run = nlohmann::json::parse(slurp(dir / "a" / "run.json"));
    CHECK(run["command"] == "train");
    CHECK(fs::exists(dir / "a" / "resolved_config.json"));

    REQUIRE(run_cli("eval --out " + (dir / "a").string() + args, dir / "e.log") == 0);
    const auto report = nlohmann::json::parse(slurp(dir / "a" / "eval" / "report.json"));
    CHECK(report["schema"] == "mmfbsde-eval/1");
    CHECK(report["conditions"][0]["adversary"] == false);
    CHECK(fs::exists(dir / "a" / "eval" / "trajectory_rs.csv"));
    // A changed model config must not silently reuse the checkpoint.
    CHECK(run_cli("eval --out " + (dir / "a").string() + args + " --set costs.epsilon=0.5", dir / "h.log") != 0);
    CHECK(slurp(dir / "h.log").find("hash mismatch") != std::string::npos);
    fs::remove_all(dir);
}
