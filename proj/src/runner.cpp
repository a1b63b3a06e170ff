#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "ldsgd/bounds.hpp"
#include "ldsgd/runner.hpp"

namespace ldsgd {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) fail(Errc::invalid_config, "cannot write " + tmp.string());
    out << text;
  }
  fs::rename(tmp, path);
}

json stats_to_json(const SchemeStats& stats) {
  return json{{"a_t", stats.a_t},
              {"b_t", stats.b_t},
              {"c_t", stats.c_t},
              {"gap", stats.gap},
              {"variant", to_string(stats.variant)}};
}

json bound_record(const std::string& scheme_label, double rho, const std::string& stat_name,
                  double exact, double bound) {
  return json{{"scheme", scheme_label}, {"rho", rho},     {"stat_name", stat_name},
              {"exact", exact},         {"bound", bound}, {"slack", bound - exact}};
}

// exact-vs-bound records for every closed form that applies to this scheme kind
json bound_comparisons(const CommScheme& scheme, double rho, Rule variant) {
  json records = json::array();
  const SchemeStats stats = exact_stats(scheme, rho, variant);
  const GapBounds t2 = gap_bounds(stats.gap, rho);
  const std::string& label = scheme.label();
  records.push_back(bound_record(label, rho, "a_t@gap-proof", stats.a_t, t2.a_proof));
  records.push_back(bound_record(label, rho, "a_t@gap-stated", stats.a_t, t2.a_stated));
  records.push_back(bound_record(label, rho, "b_t@gap", stats.b_t, t2.bc));
  records.push_back(bound_record(label, rho, "c_t@gap", stats.c_t, t2.bc));
  if (scheme.kind() == SchemeKind::i1 || scheme.kind() == SchemeKind::i0) {
    const int local = scheme.kind() == SchemeKind::i1 ? scheme.params()[0]
                                                      : scheme.params()[0] - 1;
    const int gossip = scheme.kind() == SchemeKind::i1 ? scheme.params()[1] : 1;
    if (variant == Rule::after) {
      const AlternatingBounds t3 = alternating_bounds(local, gossip, rho);
      records.push_back(bound_record(label, rho, "a_t@alternating", stats.a_t, t3.a_bound));
      records.push_back(bound_record(label, rho, "b_t@alternating", stats.b_t, t3.k * t3.k));
      records.push_back(bound_record(label, rho, "c_t@alternating", stats.c_t, t3.k * t3.k));
    } else {
      const BeforeRuleBounds bd = before_rule_bounds_for(local, gossip, rho);
      records.push_back(bound_record(label, rho, "a_t@before-rule", stats.a_t, bd.a_bound));
      records.push_back(
          bound_record(label, rho, "b_t@before-rule", stats.b_t, bd.k_tilde * bd.k_tilde));
      records.push_back(
          bound_record(label, rho, "c_t@before-rule", stats.c_t, bd.k_tilde * bd.k_tilde));
    }
  }
  if (scheme.kind() == SchemeKind::i2 && variant == Rule::after) {
    const StagedBounds t4 = staged_bounds(scheme.params()[0], scheme.params()[1],
                                          scheme.params()[2], rho, scheme.horizon());
    records.push_back(bound_record(label, rho, "a_t@staged-sound", stats.a_t, t4.a_bound_sound));
    records.push_back(bound_record(label, rho, "b_t@staged-sound", stats.b_t, t4.b_bound_sound));
    records.push_back(bound_record(label, rho, "c_t@staged", stats.c_t, t4.c_bound));
  }
  return records;
}

}  // namespace

void write_trace_csv(const fs::path& path, const RunTrace& trace) {
  std::string text = "step,loss,grad_norm_sq,residual,comms\n";
  for (const auto& p : trace.points) {
    text += std::to_string(p.step);
    text += ',';
    text += fmt_double(p.loss);
    text += ',';
    text += fmt_double(p.grad_norm_sq);
    text += ',';
    text += fmt_double(p.residual);
    text += ',';
    text += std::to_string(p.comms);
    text += '\n';
  }
  write_text_atomic(path, text);
}

RunArtifacts cmd_run(const RunConfig& cfg) {
  const MixingMatrix w = build_topology(cfg.topology);
  const auto problem = build_problem(cfg.problem);
  const CommScheme scheme = build_scheme(cfg.scheme, cfg.horizon);
  const double eta = resolve_eta(cfg, *problem, w, scheme);

  RunArtifacts art;
  art.out_dir = cfg.out_dir;
  fs::create_directories(art.out_dir);

  json aggregate;
  aggregate["format_version"] = kFormatVersion;
  aggregate["config"] = cfg.raw;
  aggregate["eta"] = eta;
  aggregate["seeds"] = cfg.seeds;
  aggregate["scheme"] = {{"label", scheme.label()},
                         {"members_count", scheme.members().size()},
                         {"gap", scheme.gap()},
                         {"rho", w.rho()}};
  json per_seed = json::array();

  std::vector<double> lhs_values;
  for (const std::uint64_t seed : cfg.seeds) {
    RunOptions opts;
    opts.eta = eta;
    opts.seed = seed;
    opts.rule = cfg.rule;
    opts.eval_every = cfg.eval_every;
    opts.log_gradients = cfg.log_gradients;
    opts.threads = cfg.threads;

    json row{{"seed", seed}};
    try {
      const RunTrace trace = run(*problem, w, scheme, opts);
      const fs::path trace_path = art.out_dir / ("trace_seed" + std::to_string(seed) + ".csv");
      write_trace_csv(trace_path, trace);
      art.trace_files.push_back(trace_path);
      row["mean_grad_norm_sq"] = trace.mean_grad_norm_sq;
      row["final_loss"] = trace.final_loss;
      row["final_residual"] = trace.final_residual;
      row["total_comms"] = trace.total_comms;
      row["diverged"] = false;
      if (trace.gradient_log && trace.gradient_log->disabled_by_cap) {
        row["gradient_log"] = "disabled: estimated size exceeds the memory cap";
      }
      lhs_values.push_back(trace.mean_grad_norm_sq);

      if (cfg.verify_decomposition) {
        const DecompositionCheck check =
            verify_decomposition(trace, w, scheme, eta, cfg.rule);
        row["decomposition"] = {{"max_abs", check.max_abs},
                                {"max_rel", check.max_rel},
                                {"steps_checked", check.steps.size()},
                                {"tolerance", 1e-9}};
        if (!(check.max_rel <= 1e-9)) art.checks_passed = false;
      }
    } catch (const DivergenceError& e) {
      row["diverged"] = true;
      row["divergence_step"] = e.step();
      art.diverged = true;
    }
    per_seed.push_back(row);
  }
  aggregate["per_seed"] = per_seed;

  if (lhs_values.size() >= 2) {
    double mean = 0.0;
    for (double v : lhs_values) mean += v;
    mean /= static_cast<double>(lhs_values.size());
    double var = 0.0;
    for (double v : lhs_values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(lhs_values.size() - 1);
    aggregate["lhs"] = {{"mean", mean},
                        {"stderr", std::sqrt(var / static_cast<double>(lhs_values.size()))}};
  } else if (lhs_values.size() == 1) {
    aggregate["lhs"] = {{"mean", lhs_values[0]}, {"stderr", nullptr}};
  }

  if (cfg.verify_bounds && cfg.horizon <= kStatsHorizonCapFull) {
    const SchemeStats stats = exact_stats(scheme, w.rho(), cfg.rule);
    json bounds;
    bounds["exact"] = stats_to_json(stats);
    bounds["records"] = bound_comparisons(scheme, w.rho(), cfg.rule);
    const ProblemConstants& consts = problem->constants();
    const BoundValue rhs = grad_norm_bound(consts, eta, cfg.horizon, stats);
    bounds["grad_norm_bound"] = {{"value", rhs.value},
                                 {"in_regime", rhs.in_regime},
                                 {"constants_estimated", problem->constants_estimated()}};
    for (const auto& rec : bounds["records"]) {
      if (rec.at("slack").get<double>() < 0.0) art.checks_passed = false;
    }
    aggregate["bounds"] = bounds;
  } else if (cfg.verify_bounds) {
    aggregate["bounds"] = {{"skipped", "horizon exceeds the exact-statistics cap"}};
  }

  art.aggregate = aggregate;
  art.aggregate_file = art.out_dir / "aggregate.json";
  write_text_atomic(art.aggregate_file, aggregate.dump(2) + "\n");
  return art;
}

SweepArtifacts cmd_sweep(const RunConfig& cfg, const std::vector<int>& local_values,
                         const std::vector<int>& gossip_values) {
  if (local_values.empty() || gossip_values.empty()) {
    fail(Errc::invalid_config, "sweep needs nonempty i1 and i2 value lists");
  }
  if (cfg.scheme.value("kind", "i1") != "i1") {
    fail(Errc::invalid_config, "sweep requires scheme kind i1");
  }
  const fs::path out_dir = cfg.out_dir;
  fs::create_directories(out_dir);

  std::string csv = "i1,i2,comms,final_loss,mean_grad_norm_sq,final_residual\n";
  json rows = json::array();
  for (const int local : local_values) {
    for (const int gossip : gossip_values) {
      RunConfig cell = cfg;
      cell.scheme = json{{"kind", "i1"}, {"i1", local}, {"i2", gossip}};
      cell.raw["scheme"] = cell.scheme;
      cell.out_dir =
          (out_dir / ("cell_i1_" + std::to_string(local) + "_i2_" + std::to_string(gossip)))
              .string();
      cell.log_gradients = false;
      cell.verify_decomposition = false;
      const RunArtifacts art = cmd_run(cell);
      if (art.diverged) {
        fail(Errc::divergence, "sweep cell i1=" + std::to_string(local) +
                                   " i2=" + std::to_string(gossip) + " diverged");
      }
      double loss = 0.0, gns = 0.0, res = 0.0;
      std::int64_t comms = 0;
      const auto& per_seed = art.aggregate.at("per_seed");
      for (const auto& row : per_seed) {
        loss += row.at("final_loss").get<double>();
        gns += row.at("mean_grad_norm_sq").get<double>();
        res += row.at("final_residual").get<double>();
        comms = row.at("total_comms").get<std::int64_t>();
      }
      const double m = static_cast<double>(per_seed.size());
      loss /= m;
      gns /= m;
      res /= m;
      csv += std::to_string(local) + "," + std::to_string(gossip) + "," +
             std::to_string(comms) + "," + fmt_double(loss) + "," + fmt_double(gns) + "," +
             fmt_double(res) + "\n";
      rows.push_back({{"i1", local},
                      {"i2", gossip},
                      {"comms", comms},
                      {"final_loss", loss},
                      {"mean_grad_norm_sq", gns},
                      {"final_residual", res}});
    }
  }
  SweepArtifacts art;
  art.summary_file = out_dir / "summary.csv";
  write_text_atomic(art.summary_file, csv);
  art.summary = {{"format_version", kFormatVersion}, {"config", cfg.raw}, {"rows", rows}};
  write_text_atomic(out_dir / "summary.json", art.summary.dump(2) + "\n");
  return art;
}

CompareDecayArtifacts cmd_compare_decay(const RunConfig& cfg, int local_steps, int gossip_steps,
                                        int stage_rounds) {
  if (gossip_steps < 1) fail(Errc::invalid_config, "compare-decay needs i2 >= 1");
  const int min_t = i2_min_horizon(local_steps, gossip_steps, stage_rounds);
  if (cfg.horizon < min_t) {
    fail(Errc::horizon_too_short, "decay schedule needs T >= " + std::to_string(min_t) +
                                      " (got " + std::to_string(cfg.horizon) + ")");
  }
  const fs::path out_dir = cfg.out_dir;
  fs::create_directories(out_dir);

  auto run_variant = [&](const json& scheme_spec, const std::string& name) {
    RunConfig sub = cfg;
    sub.scheme = scheme_spec;
    sub.raw["scheme"] = scheme_spec;
    sub.out_dir = (out_dir / name).string();
    const RunArtifacts art = cmd_run(sub);
    if (art.diverged) fail(Errc::divergence, name + " run diverged");
    return art.aggregate;
  };

  const json fixed = run_variant(
      json{{"kind", "i1"}, {"i1", local_steps}, {"i2", gossip_steps}}, "fixed");
  const json decay = run_variant(
      json{{"kind", "i2"}, {"i1", local_steps}, {"i2", gossip_steps}, {"m", stage_rounds}},
      "decay");

  auto summarize = [](const json& aggregate) {
    double loss = 0.0, res = 0.0;
    std::int64_t comms = 0;
    const auto& per_seed = aggregate.at("per_seed");
    for (const auto& row : per_seed) {
      loss += row.at("final_loss").get<double>();
      res += row.at("final_residual").get<double>();
      comms = row.at("total_comms").get<std::int64_t>();
    }
    const double m = static_cast<double>(per_seed.size());
    return json{{"final_loss_mean", loss / m},
                {"final_residual_mean", res / m},
                {"comms", comms},
                {"per_seed", per_seed}};
  };

  CompareDecayArtifacts art;
  art.report = {{"format_version", kFormatVersion},
                {"config", cfg.raw},
                {"i1", local_steps},
                {"i2", gossip_steps},
                {"m", stage_rounds},
                {"fixed", summarize(fixed)},
                {"decay", summarize(decay)}};
  const double tie = 1e-9;  // means can tie to fp noise on linear-gradient problems
  const double fixed_res = art.report["fixed"]["final_residual_mean"].get<double>();
  const double decay_res = art.report["decay"]["final_residual_mean"].get<double>();
  const double fixed_loss = art.report["fixed"]["final_loss_mean"].get<double>();
  const double decay_loss = art.report["decay"]["final_loss_mean"].get<double>();
  art.decay_no_worse =
      decay_res <= fixed_res + tie * std::max(1.0, std::abs(fixed_res)) &&
      decay_loss <= fixed_loss + tie * std::max(1.0, std::abs(fixed_loss));
  art.report["decay_no_worse"] = art.decay_no_worse;
  art.report_file = out_dir / "compare_decay.json";
  write_text_atomic(art.report_file, art.report.dump(2) + "\n");
  return art;
}

nlohmann::json cmd_stats(const json& config) {
  if (!config.is_object()) fail(Errc::invalid_config, "configuration must be a JSON object");
  if (!config.contains("scheme")) fail(Errc::invalid_config, "missing field 'scheme' in config");
  if (!config.contains("horizon")) {
    fail(Errc::invalid_config, "missing field 'horizon' in config");
  }
  const int horizon = config.at("horizon").get<int>();
  double rho;
  if (config.contains("rho")) {
    rho = config.at("rho").get<double>();
    if (!(rho >= 0.0 && rho < 1.0)) fail(Errc::invalid_config, "rho must lie in [0, 1)");
  } else if (config.contains("topology")) {
    rho = build_topology(config.at("topology")).rho();
  } else {
    fail(Errc::invalid_config, "stats needs either 'rho' or 'topology' in the config");
  }

  const CommScheme scheme = build_scheme(config.at("scheme"), horizon);
  json out;
  out["format_version"] = kFormatVersion;
  out["config"] = config;
  out["scheme"] = {{"label", scheme.label()},
                   {"members_count", scheme.members().size()},
                   {"gap", scheme.gap()},
                   {"rho", rho}};
  out["exact"] = {{"after", stats_to_json(exact_stats(scheme, rho, Rule::after))},
                  {"before", stats_to_json(exact_stats(scheme, rho, Rule::before))}};
  out["records"] = bound_comparisons(scheme, rho, Rule::after);
  json before_records = bound_comparisons(scheme, rho, Rule::before);
  for (const auto& rec : before_records) out["records"].push_back(rec);
  return out;
}

}  // namespace ldsgd
