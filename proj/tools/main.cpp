#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "ldsgd/runner.hpp"

namespace {

using ldsgd::Errc;

constexpr int kExitOk = 0;
constexpr int kExitCheckFailure = 1;
constexpr int kExitConfigError = 2;
constexpr int kExitDivergence = 3;

int exit_code_for(const ldsgd::Error& e) {
  return e.code() == Errc::divergence ? kExitDivergence : kExitConfigError;
}

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos < csv.size()) {
    const std::size_t comma = csv.find(',', pos);
    const std::string tok = csv.substr(pos, comma == std::string::npos ? csv.size() - pos
                                                                       : comma - pos);
    out.push_back(std::stoi(tok));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::string seeds_csv;
  std::string rule;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
  auto* opt = cmd->add_option("--config", args.config_path, "path to the JSON run config");
  if (config_required) opt->required();
  cmd->add_option("--out", args.out_dir, "output directory (overrides the config)");
  cmd->add_option("--seeds", args.seeds_csv, "comma-separated seed list (overrides the config)");
  cmd->add_option("--rule", args.rule, "update rule: after | before (overrides the config)");
}

ldsgd::RunConfig load_with_overrides(const CommonArgs& args) {
  ldsgd::RunConfig cfg = ldsgd::load_run_config(args.config_path);
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  if (!args.seeds_csv.empty()) {
    cfg.seeds.clear();
    for (int s : parse_int_list(args.seeds_csv)) {
      cfg.seeds.push_back(static_cast<std::uint64_t>(s));
    }
    cfg.raw["seeds"] = cfg.seeds;
  }
  if (!args.rule.empty()) {
    cfg.rule = ldsgd::rule_from_string(args.rule);
    cfg.raw["rule"] = args.rule;
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized SGD with scheduled local updates: simulator and "
               "bound-verification toolkit"};
  app.require_subcommand(1);

  CommonArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "execute the configured runs and write artifacts");
  add_common(run_cmd, run_args);

  CommonArgs sweep_args;
  std::string sweep_i1 = "0,5,10,15";
  std::string sweep_i2 = "1,5";
  auto* sweep_cmd = app.add_subcommand("sweep", "grid of (i1, i2) alternating schedules");
  add_common(sweep_cmd, sweep_args);
  sweep_cmd->add_option("--i1", sweep_i1, "comma-separated local-phase lengths");
  sweep_cmd->add_option("--i2", sweep_i2, "comma-separated gossip-phase lengths");

  CommonArgs decay_args;
  int decay_i1 = 8, decay_i2 = 1, decay_m = 50;
  auto* decay_cmd = app.add_subcommand(
      "compare-decay", "run the fixed and staged-decay schedules side by side");
  add_common(decay_cmd, decay_args);
  decay_cmd->add_option("--i1", decay_i1, "initial local-phase length");
  decay_cmd->add_option("--i2", decay_i2, "gossip-phase length");
  decay_cmd->add_option("--m", decay_m, "rounds per decay stage");

  CommonArgs verify_args;
  double perturb_stats = 1.0;
  int verify_threads = 1;
  bool skip_mc = false;
  auto* verify_cmd =
      app.add_subcommand("verify", "run the full theory-verification battery");
  add_common(verify_cmd, verify_args, /*config_required=*/false);
  verify_cmd->add_option("--perturb-stats", perturb_stats,
                         "fault-injection factor applied to the exact statistics")
      ->capture_default_str();
  verify_cmd->add_option("--threads", verify_threads, "worker threads for the Monte Carlo check");
  verify_cmd->add_flag("--skip-monte-carlo", skip_mc, "skip the simulation-based inequality check");

  CommonArgs stats_args;
  auto* stats_cmd = app.add_subcommand(
      "stats", "print exact and bounded scheme statistics without simulating");
  add_common(stats_cmd, stats_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      const auto art = ldsgd::cmd_run(load_with_overrides(run_args));
      std::cout << "wrote " << art.aggregate_file.string() << " and " << art.trace_files.size()
                << " trace file(s)\n";
      if (art.diverged) {
        std::cerr << "error: at least one seed diverged; partial artifacts retained\n";
        return kExitDivergence;
      }
      if (!art.checks_passed) {
        std::cerr << "error: a requested runtime check failed (see aggregate.json)\n";
        return kExitCheckFailure;
      }
      return kExitOk;
    }
    if (*sweep_cmd) {
      const auto art = ldsgd::cmd_sweep(load_with_overrides(sweep_args),
                                        parse_int_list(sweep_i1), parse_int_list(sweep_i2));
      std::cout << "wrote " << art.summary_file.string() << "\n";
      return kExitOk;
    }
    if (*decay_cmd) {
      const auto art = ldsgd::cmd_compare_decay(load_with_overrides(decay_args), decay_i1,
                                                decay_i2, decay_m);
      std::cout << "wrote " << art.report_file.string() << "\n";
      return kExitOk;
    }
    if (*verify_cmd) {
      ldsgd::VerifyOptions opts;
      opts.stats_scale = perturb_stats;
      opts.threads = verify_threads;
      opts.run_monte_carlo = !skip_mc;
      const ldsgd::VerifyReport report = ldsgd::run_verify_battery(opts);
      for (const auto& check : report.checks) {
        std::printf("[%s] %-36s metric=%.3e threshold=%.3e\n", check.pass ? "PASS" : "FAIL",
                    check.name.c_str(), check.metric, check.threshold);
      }
      if (!verify_args.out_dir.empty()) {
        std::filesystem::create_directories(verify_args.out_dir);
        const auto path = std::filesystem::path(verify_args.out_dir) / "verify_report.json";
        std::ofstream out(path);
        out << report.to_json().dump(2) << "\n";
        std::cout << "wrote " << path.string() << "\n";
      }
      return report.all_pass ? kExitOk : kExitCheckFailure;
    }
    if (*stats_cmd) {
      std::ifstream in(stats_args.config_path);
      if (!in) {
        std::cerr << "error: cannot open config file " << stats_args.config_path << "\n";
        return kExitConfigError;
      }
      nlohmann::json config = nlohmann::json::parse(in);
      const nlohmann::json out = ldsgd::cmd_stats(config);
      if (!stats_args.out_dir.empty()) {
        std::filesystem::create_directories(stats_args.out_dir);
        const auto path = std::filesystem::path(stats_args.out_dir) / "stats.json";
        std::ofstream file(path);
        file << out.dump(2) << "\n";
        std::cout << "wrote " << path.string() << "\n";
      } else {
        std::cout << out.dump(2) << "\n";
      }
      return kExitOk;
    }
  } catch (const ldsgd::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfigError;
  }
  return kExitConfigError;
}
