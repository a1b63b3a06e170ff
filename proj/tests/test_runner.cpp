#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ldsgd/runner.hpp"

using namespace ldsgd;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json base_config(const std::string& out_dir) {
  return json{
      {"topology", {{"kind", "complete"}, {"n", 4}}},
      {"scheme", {{"kind", "i1"}, {"i1", 0}, {"i2", 1}}},
      {"problem",
       {{"family", "quadratic"}, {"dim", 5}, {"nodes", 4}, {"kappa", 0.5}, {"sigma", 0.2},
        {"cond", 5.0}, {"seed", 7}}},
      {"eta", 0.05},
      {"horizon", 100},
      {"seeds", {1}},
      {"eval_every", 10},
      {"out_dir", out_dir},
  };
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s) {
    if (c == '\n') ++n;
  }
  return n;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ldsgd_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("minimal run writes the counted trace and an aggregate") {
  const fs::path out = temp_dir("run_minimal");
  const RunConfig cfg = parse_run_config(base_config(out.string()));
  const RunArtifacts art = cmd_run(cfg);
  CHECK_FALSE(art.diverged);
  CHECK(art.checks_passed);
  REQUIRE(art.trace_files.size() == 1);

  const std::string csv = read_file(art.trace_files[0]);
  CHECK(csv.rfind("step,loss,grad_norm_sq,residual,comms\n", 0) == 0);
  CHECK(count_lines(csv) == 100 / 10 + 2);  // header + t=1 + the ten multiples

  CHECK(art.aggregate.at("format_version") == kFormatVersion);
  CHECK(art.aggregate.at("config") == cfg.raw);
  CHECK(art.aggregate.at("per_seed").size() == 1);
  CHECK(art.aggregate.at("per_seed")[0].at("total_comms") == 100);
}

TEST_CASE("missing fields are named in config errors") {
  json cfg = base_config(temp_dir("cfg_err").string());
  cfg.erase("topology");
  try {
    parse_run_config(cfg);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::invalid_config);
    CHECK(std::string(e.what()).find("topology") != std::string::npos);
  }

  json cfg2 = base_config(temp_dir("cfg_err2").string());
  cfg2["problem"].erase("sigma");
  const RunConfig parsed = parse_run_config(cfg2);
  try {
    cmd_run(parsed);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("sigma") != std::string::npos);
  }
}

TEST_CASE("node-count mismatch is rejected") {
  json cfg = base_config(temp_dir("mismatch").string());
  cfg["problem"]["nodes"] = 3;
  CHECK_THROWS_AS(cmd_run(parse_run_config(cfg)), Error);
}

TEST_CASE("bound verification artifacts carry nonnegative slack") {
  json cfg = base_config(temp_dir("bounds").string());
  cfg["verify_bounds"] = true;
  cfg["scheme"] = {{"kind", "i1"}, {"i1", 3}, {"i2", 2}};
  cfg["topology"] = {{"kind", "ring"}, {"n", 4}, {"self_weight", 0.5}};
  const RunArtifacts art = cmd_run(parse_run_config(cfg));
  CHECK(art.checks_passed);
  const json& bounds = art.aggregate.at("bounds");
  CHECK(bounds.at("exact").contains("a_t"));
  REQUIRE(bounds.at("records").is_array());
  CHECK(bounds.at("records").size() >= 6);
  for (const auto& rec : bounds.at("records")) {
    for (const char* key : {"scheme", "rho", "stat_name", "exact", "bound", "slack"}) {
      CHECK(rec.contains(key));
    }
    CHECK(rec.at("slack").get<double>() >= 0.0);
  }
}

TEST_CASE("decomposition flag verifies the identity during the run") {
  json cfg = base_config(temp_dir("decomp").string());
  cfg["verify_decomposition"] = true;
  cfg["horizon"] = 50;
  cfg["scheme"] = {{"kind", "i1"}, {"i1", 3}, {"i2", 2}};
  const RunArtifacts art = cmd_run(parse_run_config(cfg));
  CHECK(art.checks_passed);
  const json& row = art.aggregate.at("per_seed")[0];
  CHECK(row.at("decomposition").at("max_rel").get<double>() <= 1e-9);
}

TEST_CASE("auto step size stays below the ceiling") {
  json cfg = base_config(temp_dir("auto_eta").string());
  cfg["eta"] = "auto";
  cfg["scheme"] = {{"kind", "i1"}, {"i1", 4}, {"i2", 2}};
  cfg["topology"] = {{"kind", "ring"}, {"n", 4}, {"self_weight", 0.5}};
  const RunConfig parsed = parse_run_config(cfg);
  const MixingMatrix w = build_topology(parsed.topology);
  const auto problem = build_problem(parsed.problem);
  const CommScheme scheme = build_scheme(parsed.scheme, parsed.horizon);
  const double eta = resolve_eta(parsed, *problem, w, scheme);
  const double c_t = exact_stats(scheme, w.rho(), Rule::after).c_t;
  CHECK(eta <= lr_ceiling(problem->constants(), c_t));
  CHECK(eta > 0.0);
  const RunArtifacts art = cmd_run(parsed);
  CHECK(art.aggregate.at("eta").get<double>() == eta);
}

TEST_CASE("auto step size falls back to the gap bound above the statistics cap") {
  json cfg = base_config(temp_dir("auto_eta_cap").string());
  cfg["eta"] = "auto";
  cfg["horizon"] = kStatsHorizonCapFull + 100;
  cfg["scheme"] = {{"kind", "i1"}, {"i1", 3}, {"i2", 2}};
  const RunConfig parsed = parse_run_config(cfg);
  const MixingMatrix w = build_topology(parsed.topology);
  const auto problem = build_problem(parsed.problem);
  const CommScheme scheme = build_scheme(parsed.scheme, parsed.horizon);
  const double eta = resolve_eta(parsed, *problem, w, scheme);
  CHECK(eta > 0.0);
  CHECK(eta <= std::sqrt(static_cast<double>(problem->nodes()) / parsed.horizon));
  // the gap-based c bound only shrinks the ceiling, never enlarges it
  const double gap_ceiling =
      lr_ceiling(problem->constants(), gap_bounds(scheme.gap(), w.rho()).bc);
  CHECK(eta <= gap_ceiling + 1e-15);
}

TEST_CASE("divergence keeps partial artifacts and is flagged") {
  json cfg = base_config(temp_dir("diverge").string());
  cfg["eta"] = 5.0;
  cfg["horizon"] = 3000;
  cfg["seeds"] = {1, 2};
  const RunArtifacts art = cmd_run(parse_run_config(cfg));
  CHECK(art.diverged);
  CHECK(fs::exists(art.aggregate_file));
  CHECK(art.aggregate.at("per_seed")[0].at("diverged") == true);
  CHECK(art.aggregate.at("per_seed")[0].contains("divergence_step"));
}

TEST_CASE("sweep emits one row per cell with matching communication counts") {
  json cfg = base_config(temp_dir("sweep").string());
  cfg["horizon"] = 60;
  cfg["seeds"] = {1, 2, 3};
  const SweepArtifacts art =
      cmd_sweep(parse_run_config(cfg), {0, 5, 10, 15}, {1, 5});
  const std::string csv = read_file(art.summary_file);
  CHECK(csv.rfind("i1,i2,comms,final_loss,mean_grad_norm_sq,final_residual\n", 0) == 0);
  CHECK(count_lines(csv) == 1 + 8);
  for (const auto& row : art.summary.at("rows")) {
    const CommScheme scheme = CommScheme::i1(row.at("i1").get<int>(), row.at("i2").get<int>(), 60);
    CHECK(row.at("comms").get<std::int64_t>() ==
          static_cast<std::int64_t>(scheme.members().size()));
  }
  CHECK_THROWS_AS(cmd_sweep(parse_run_config(cfg), {}, {1}), Error);
}

TEST_CASE("sweep trend: more gossip never hurts the averaged gradient norm") {
  json cfg = base_config(temp_dir("sweep_trend").string());
  cfg["horizon"] = 300;
  cfg["topology"] = {{"kind", "ring"}, {"n", 4}, {"self_weight", 0.5}};
  json seeds = json::array();
  for (int s = 1; s <= 20; ++s) seeds.push_back(s);
  cfg["seeds"] = seeds;
  cfg["eta"] = 0.03;
  const SweepArtifacts art = cmd_sweep(parse_run_config(cfg), {4}, {1, 2, 4});
  double prev = std::numeric_limits<double>::infinity();
  for (const auto& row : art.summary.at("rows")) {
    const double gns = row.at("mean_grad_norm_sq").get<double>();
    // linear gradients decouple the mean trajectory, so ties at fp noise
    // scale are expected; the trend must never genuinely increase
    CHECK(gns <= prev * (1.0 + 1e-9));
    prev = gns;
  }
}

TEST_CASE("compare-decay pairs the two schedules") {
  json cfg = base_config(temp_dir("decay").string());
  cfg["horizon"] = 400;
  cfg["seeds"] = {1, 2, 3, 4, 5};
  cfg["topology"] = {{"kind", "ring"}, {"n", 4}, {"self_weight", 0.5}};
  cfg["eta"] = 0.03;
  const CompareDecayArtifacts art = cmd_compare_decay(parse_run_config(cfg), 4, 1, 10);
  const json& rep = art.report;
  CHECK(rep.at("decay").at("comms").get<std::int64_t>() >=
        rep.at("fixed").at("comms").get<std::int64_t>());
  CHECK(art.decay_no_worse);

  // degenerate decay: identical schedules, identical outputs per seed
  const CompareDecayArtifacts same = cmd_compare_decay(parse_run_config(cfg), 0, 1, 10);
  const json& fixed_rows = same.report.at("fixed").at("per_seed");
  const json& decay_rows = same.report.at("decay").at("per_seed");
  REQUIRE(fixed_rows.size() == decay_rows.size());
  for (std::size_t i = 0; i < fixed_rows.size(); ++i) {
    CHECK(fixed_rows[i].at("final_loss") == decay_rows[i].at("final_loss"));
    CHECK(fixed_rows[i].at("final_residual") == decay_rows[i].at("final_residual"));
    CHECK(fixed_rows[i].at("mean_grad_norm_sq") == decay_rows[i].at("mean_grad_norm_sq"));
  }

  // horizon below the schedule's last stage is rejected with the minimum
  json tight = base_config(temp_dir("decay_short").string());
  tight["horizon"] = 10;
  try {
    cmd_compare_decay(parse_run_config(tight), 8, 1, 50);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::horizon_too_short);
  }
}

TEST_CASE("stats command reports exact values and bounds without simulating") {
  json cfg{{"scheme", {{"kind", "i1"}, {"i1", 3}, {"i2", 2}}},
           {"horizon", 100},
           {"rho", 0.5}};
  const json out = cmd_stats(cfg);
  CHECK(out.at("format_version") == kFormatVersion);
  CHECK(out.at("exact").at("after").at("a_t").get<double>() > 0.0);
  CHECK(out.at("exact").at("before").at("b_t").get<double>() >=
        out.at("exact").at("after").at("b_t").get<double>());
  CHECK(out.at("records").size() >= 10);

  json topo_cfg{{"scheme", {{"kind", "i0"}, {"i", 5}}},
                {"horizon", 50},
                {"topology", {{"kind", "complete"}, {"n", 4}}}};
  const json out2 = cmd_stats(topo_cfg);
  CHECK(out2.at("scheme").at("rho").get<double>() <= 1e-10);

  CHECK_THROWS_AS(cmd_stats(json{{"horizon", 10}}), Error);
}

TEST_CASE("rerunning a config byte-reproduces the trace files") {
  json cfg = base_config(temp_dir("repro_a").string());
  cfg["seeds"] = {5, 6};
  cfg["scheme"] = {{"kind", "i1"}, {"i1", 2}, {"i2", 1}};
  const RunArtifacts a = cmd_run(parse_run_config(cfg));
  cfg["out_dir"] = temp_dir("repro_b").string();
  const RunArtifacts b = cmd_run(parse_run_config(cfg));
  cfg["out_dir"] = temp_dir("repro_c").string();
  cfg["threads"] = 4;
  const RunArtifacts c = cmd_run(parse_run_config(cfg));
  REQUIRE(a.trace_files.size() == b.trace_files.size());
  REQUIRE(a.trace_files.size() == c.trace_files.size());
  for (std::size_t i = 0; i < a.trace_files.size(); ++i) {
    const std::string ref = read_file(a.trace_files[i]);
    CHECK(ref == read_file(b.trace_files[i]));
    CHECK(ref == read_file(c.trace_files[i]));
  }
}

TEST_CASE("fault injection is caught by the equivalence check but not dominance") {
  VerifyOptions opts;
  opts.product_norm_cases = 4;      // keep the negative control fast
  opts.equivalence_cases = 24;
  opts.gap_dominance_cases = 60;
  opts.run_monte_carlo = false;
  opts.stats_scale = 1.1;
  const VerifyReport report = run_verify_battery(opts);
  bool equivalence_failed = false;
  bool gap_dominance_passed = false;
  for (const auto& check : report.checks) {
    if (check.name == "stats_recurrence_vs_definitional") {
      equivalence_failed = !check.pass;
    }
    // the gap-based bounds carry structural slack, so a 10% fault slips past
    // them (the near-tight per-family bounds may or may not trip)
    if (check.name == "bound_dominance_gap") {
      gap_dominance_passed = check.pass;
    }
  }
  CHECK(equivalence_failed);
  CHECK(gap_dominance_passed);
  CHECK_FALSE(report.all_pass);
}

TEST_CASE("verify report serializes with the documented keys") {
  VerifyOptions opts;
  opts.product_norm_cases = 2;
  opts.equivalence_cases = 4;
  opts.gap_dominance_cases = 10;
  opts.run_monte_carlo = false;
  const VerifyReport report = run_verify_battery(opts);
  const json j = report.to_json();
  CHECK(j.at("format_version") == kFormatVersion);
  CHECK(j.at("all_pass").is_boolean());
  REQUIRE(j.at("checks").is_array());
  for (const auto& check : j.at("checks")) {
    CHECK(check.at("name").is_string());
    CHECK(check.at("pass").is_boolean());
    CHECK(check.at("metric").is_number());
    CHECK(check.at("threshold").is_number());
  }
}
