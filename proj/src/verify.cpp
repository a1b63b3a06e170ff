#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "ldsgd/bounds.hpp"
#include "ldsgd/rng.hpp"
#include "ldsgd/runner.hpp"

namespace ldsgd {

namespace {

using nlohmann::json;

double rel_err(double x, double y) {
  const double diff = std::abs(x - y);
  if (diff == 0.0) return 0.0;
  return diff / std::max(std::abs(y), 1e-300);
}

// a few grid cells converge to exact statistic/bound ties, where the sign of
// a one-ulp rounding difference is meaningless
bool violates(double slack, double bound) {
  return slack < -1e-12 * std::max(1.0, std::abs(bound));
}

double operator_norm_sym(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

// doubly stochastic blend with every secondary eigenvalue equal to rho
Eigen::MatrixXd blend_matrix(int n, double rho) {
  const double off = (1.0 - rho) / n;
  Eigen::MatrixXd w = Eigen::MatrixXd::Constant(n, n, off);
  for (int i = 0; i < n; ++i) w(i, i) = rho + off;
  return w;
}

CommScheme random_scheme(CounterRng& rng, int max_horizon) {
  const int horizon = 4 + static_cast<int>(rng.below(max_horizon - 3));
  const double p = 0.15 + 0.7 * rng.uniform01();
  std::vector<int> members;
  for (int t = 1; t <= horizon; ++t) {
    if (rng.uniform01() < p) members.push_back(t);
  }
  return CommScheme::explicit_set(std::move(members), horizon);
}

CheckResult check_rho_products(const VerifyOptions& opts) {
  CheckResult res;
  res.name = "rho_product_vs_operator_norm";
  res.threshold = 1e-9;
  const double rhos[] = {0.2, 0.5, 0.9};
  double worst = 0.0;
  long comparisons = 0;
  for (int c = 0; c < opts.product_norm_cases; ++c) {
    CounterRng rng(opts.seed, 0x70726f64756374ULL, c);
    const int n = 2 + static_cast<int>(rng.below(7));
    const MixingMatrix w = MixingMatrix::from_weights(blend_matrix(n, rhos[c % 3]));
    const CommScheme scheme = random_scheme(rng, 32);
    const int horizon = scheme.horizon();
    const Eigen::MatrixXd q = Eigen::MatrixXd::Constant(n, n, 1.0 / n);
    for (int s = 1; s <= horizon; ++s) {
      Eigen::MatrixXd phi = Eigen::MatrixXd::Identity(n, n);
      for (int t = s + 1; t <= horizon + 1; ++t) {
        if (scheme.contains(t - 1)) phi = (phi * w.weights()).eval();
        const double norm = operator_norm_sym(phi - q);
        const double predicted = std::pow(w.rho(), scheme.rho_exponent(s, t));
        worst = std::max(worst, std::abs(norm - predicted));
        ++comparisons;
      }
    }
  }
  res.metric = worst;
  res.pass = worst <= res.threshold;
  res.details = {{"cases", opts.product_norm_cases}, {"comparisons", comparisons}};
  return res;
}

CheckResult check_stats_equivalence(const VerifyOptions& opts) {
  CheckResult res;
  res.name = "stats_recurrence_vs_definitional";
  res.threshold = 1e-12;
  const double rhos[] = {0.0, 0.1, 0.5, 0.9, 0.99};
  double worst = 0.0;
  for (int c = 0; c < opts.equivalence_cases; ++c) {
    CounterRng rng(opts.seed, 0x657175697661ULL, c);
    const double rho = rhos[c % 5];
    CommScheme scheme = [&]() {
      switch (c % 4) {
        case 0: {
          const int horizon = 8 + static_cast<int>(rng.below(249));
          const int interval = 1 + static_cast<int>(rng.below(horizon));
          return CommScheme::i0(interval, horizon);
        }
        case 1: {
          const int horizon = 8 + static_cast<int>(rng.below(249));
          return CommScheme::i1(static_cast<int>(rng.below(7)),
                                1 + static_cast<int>(rng.below(4)), horizon);
        }
        case 2: {
          const int local = 1 + static_cast<int>(rng.below(4));
          const int gossip = 1 + static_cast<int>(rng.below(2));
          const int rounds = 1 + static_cast<int>(rng.below(3));
          const int min_t = i2_min_horizon(local, gossip, rounds);
          return CommScheme::i2(local, gossip, rounds,
                                min_t + static_cast<int>(rng.below(100)));
        }
        default:
          return random_scheme(rng, 256);
      }
    }();
    for (const Rule variant : {Rule::after, Rule::before}) {
      const SchemeStats fast = exact_stats(scheme, rho, variant);
      const SchemeStats slow = definitional_stats(scheme, rho, variant);
      worst = std::max({worst, rel_err(opts.stats_scale * fast.a_t, slow.a_t),
                        rel_err(opts.stats_scale * fast.b_t, slow.b_t),
                        rel_err(opts.stats_scale * fast.c_t, slow.c_t)});
    }
  }
  res.metric = worst;
  res.pass = worst <= res.threshold;
  res.details = {{"cases", opts.equivalence_cases}};
  return res;
}

CheckResult check_dominance_thm3(const VerifyOptions& opts) {
  CheckResult res;
  res.name = "bound_dominance_alternating";
  res.threshold = 0.0;
  int violations = 0;
  double min_slack = std::numeric_limits<double>::infinity();
  for (int local = 0; local <= 6; ++local) {
    for (int gossip = 1; gossip <= 4; ++gossip) {
      for (const double rho : {0.1, 0.5, 0.9}) {
        const int horizon = 20 * (local + gossip);
        const CommScheme scheme = CommScheme::i1(local, gossip, horizon);
        const SchemeStats stats = exact_stats(scheme, rho, Rule::after);
        const AlternatingBounds b = alternating_bounds(local, gossip, rho);
        const double pairs[][2] = {{b.a_bound, opts.stats_scale * stats.a_t},
                                   {b.k * b.k, opts.stats_scale * stats.b_t},
                                   {b.k * b.k, opts.stats_scale * stats.c_t}};
        for (const auto& pr : pairs) {
          const double slack = pr[0] - pr[1];
          min_slack = std::min(min_slack, slack);
          if (violates(slack, pr[0])) ++violations;
        }
      }
    }
  }
  res.metric = min_slack;
  res.pass = violations == 0;
  res.details = {{"violations", violations}, {"cells", 7 * 4 * 3}};
  return res;
}

CheckResult check_dominance_thm4(const VerifyOptions& opts) {
  CheckResult res;
  res.name = "bound_dominance_staged";
  res.threshold = 0.0;
  int violations = 0;
  int sharp_violations = 0;
  int stated_a_violations = 0;
  int stated_b_violations = 0;
  double min_slack = std::numeric_limits<double>::infinity();
  for (const int local : {1, 2, 4}) {
    for (const int gossip : {1, 2}) {
      for (const int rounds : {1, 2, 3}) {
        for (const double rho : {0.3, 0.7}) {
          const int horizon = i2_min_horizon(local, gossip, rounds) + 50;
          const CommScheme scheme = CommScheme::i2(local, gossip, rounds, horizon);
          const SchemeStats stats = exact_stats(scheme, rho, Rule::after);
          const StagedBounds b = staged_bounds(local, gossip, rounds, rho, horizon);
          const double pairs[][2] = {{b.a_bound_sound, opts.stats_scale * stats.a_t},
                                     {b.b_bound_sound, opts.stats_scale * stats.b_t},
                                     {b.c_bound, opts.stats_scale * stats.c_t}};
          for (const auto& pr : pairs) {
            const double slack = pr[0] - pr[1];
            min_slack = std::min(min_slack, slack);
            if (violates(slack, pr[0])) ++violations;
          }
          if (b.a_bound < stats.a_t) ++stated_a_violations;
          if (b.b_bound < stats.b_t) ++stated_b_violations;
          if (b.a_bound_sharp < stats.a_t || b.b_bound_sharp < stats.b_t) ++sharp_violations;
        }
      }
    }
  }
  res.metric = min_slack;
  res.pass = violations == 0;
  res.details = {{"violations", violations},
                 {"stated_form_a_violations", stated_a_violations},
                 {"stated_form_b_violations", stated_b_violations},
                 {"sharp_form_violations", sharp_violations},
                 {"cells", 3 * 2 * 3 * 2}};
  return res;
}

CheckResult check_dominance_before_rule(const VerifyOptions& opts) {
  CheckResult res;
  res.name = "bound_dominance_before_rule";
  res.threshold = 0.0;
  int violations = 0;
  double min_slack = std::numeric_limits<double>::infinity();
  for (int local = 0; local <= 6; ++local) {
    for (int gossip = 1; gossip <= 4; ++gossip) {
      for (const double rho : {0.1, 0.5, 0.9}) {
        const int horizon = 20 * (local + gossip);
        const CommScheme scheme = CommScheme::i1(local, gossip, horizon);
        const SchemeStats stats = exact_stats(scheme, rho, Rule::before);
        const BeforeRuleBounds b = before_rule_bounds_for(local, gossip, rho);
        const double k2 = b.k_tilde * b.k_tilde;
        const double pairs[][2] = {{b.a_bound, opts.stats_scale * stats.a_t},
                                   {k2, opts.stats_scale * stats.b_t},
                                   {k2, opts.stats_scale * stats.c_t}};
        for (const auto& pr : pairs) {
          const double slack = pr[0] - pr[1];
          min_slack = std::min(min_slack, slack);
          if (violates(slack, pr[0])) ++violations;
        }
      }
    }
  }
  res.metric = min_slack;
  res.pass = violations == 0;
  res.details = {{"violations", violations}, {"cells", 7 * 4 * 3}};
  return res;
}

CheckResult check_dominance_thm2(const VerifyOptions& opts) {
  CheckResult res;
  res.name = "bound_dominance_gap";
  res.threshold = 0.0;
  int violations = 0;
  int stated_a_violations = 0;
  double min_slack = std::numeric_limits<double>::infinity();
  for (int c = 0; c < opts.gap_dominance_cases; ++c) {
    CounterRng rng(opts.seed, 0x676170ULL, c);
    const CommScheme scheme = random_scheme(rng, 512);
    const double rho = (c % 7 == 0) ? 0.0 : 0.95 * rng.uniform01();
    const SchemeStats stats = exact_stats(scheme, rho, Rule::after);
    const GapBounds b = gap_bounds(stats.gap, rho);
    const double pairs[][2] = {{b.a_proof, opts.stats_scale * stats.a_t},
                               {b.bc, opts.stats_scale * stats.b_t},
                               {b.bc, opts.stats_scale * stats.c_t}};
    for (const auto& pr : pairs) {
      const double slack = pr[0] - pr[1];
      min_slack = std::min(min_slack, slack);
      if (violates(slack, pr[0])) ++violations;
    }
    if (b.a_stated < stats.a_t) ++stated_a_violations;
  }
  res.metric = min_slack;
  res.pass = violations == 0;
  res.details = {{"violations", violations},
                 {"stated_form_a_violations", stated_a_violations},
                 {"cases", opts.gap_dominance_cases}};
  return res;
}

CheckResult check_decomposition(const VerifyOptions& opts) {
  CheckResult res;
  res.name = "decomposition_identity";
  res.threshold = 1e-9;
  const auto problem = make_quadratic(4, 6, 1.0, 0.3, 5.0, opts.seed + 7);
  const MixingMatrix w = MixingMatrix::ring(6, 0.5);
  const int horizon = 50;
  const std::vector<CommScheme> schemes = {CommScheme::i0(5, horizon),
                                           CommScheme::i1(3, 2, horizon),
                                           CommScheme::i2(2, 1, 2, horizon)};
  double worst = 0.0;
  for (const auto& scheme : schemes) {
    for (const Rule rule : {Rule::after, Rule::before}) {
      RunOptions ro;
      ro.eta = 0.05;
      ro.seed = opts.seed + 11;
      ro.rule = rule;
      ro.eval_every = horizon;
      ro.log_gradients = true;
      const RunTrace trace = run(*problem, w, scheme, ro);
      const DecompositionCheck check = verify_decomposition(trace, w, scheme, ro.eta, rule);
      worst = std::max(worst, check.max_rel);
    }
  }
  res.metric = worst;
  res.pass = worst <= res.threshold;
  res.details = {{"schemes", 3}, {"rules", 2}, {"dims", "d=4 n=6 T=50"}};
  return res;
}

CheckResult check_decomposition_negative_control(const VerifyOptions& opts) {
  CheckResult res;
  res.name = "decomposition_negative_control";
  res.threshold = 1e-3;
  const auto problem = make_quadratic(4, 6, 1.0, 0.3, 5.0, opts.seed + 7);
  const MixingMatrix w = MixingMatrix::ring(6, 0.5);
  const CommScheme scheme = CommScheme::i1(3, 2, 50);
  RunOptions ro;
  ro.eta = 0.05;
  ro.seed = opts.seed + 11;
  ro.rule = Rule::after;
  ro.eval_every = 50;
  ro.log_gradients = true;
  const RunTrace trace = run(*problem, w, scheme, ro);
  // replaying with the wrong rule must break the identity loudly
  const DecompositionCheck check =
      verify_decomposition(trace, w, scheme, ro.eta, Rule::before);
  res.metric = check.max_rel;
  res.pass = check.max_rel > res.threshold;
  res.details = {{"direction", "deviation must exceed the threshold"}};
  return res;
}

CheckResult check_grad_norm_bound_monte_carlo(const VerifyOptions& opts) {
  CheckResult res;
  res.name = "grad_norm_bound_monte_carlo";
  const int horizon = 2000;
  const auto problem = make_quadratic(20, 8, 0.5, 0.2, 10.0, opts.seed + 3);
  const MixingMatrix w = MixingMatrix::from_weights(blend_matrix(8, 0.5));
  const CommScheme scheme = CommScheme::i1(4, 2, horizon);
  const SchemeStats stats = exact_stats(scheme, w.rho(), Rule::after);
  const double eta = 0.5 * lr_ceiling(problem->constants(), stats.c_t);
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < opts.mc_seeds; ++i) seeds.push_back(opts.seed + 100 + i);
  const GradNormEstimate est = estimate_mean_grad_norm(*problem, w, scheme, eta, seeds, Rule::after,
                                                opts.threads);
  const BoundValue rhs = grad_norm_bound(problem->constants(), eta, horizon, stats);
  res.threshold = rhs.value + 3.0 * est.stderr_;
  res.metric = est.mean;
  res.pass = rhs.in_regime && est.mean <= res.threshold;
  res.details = {{"lhs_mean", est.mean},
                 {"lhs_stderr", est.stderr_},
                 {"rhs", rhs.value},
                 {"in_regime", rhs.in_regime},
                 {"eta", eta},
                 {"seeds", seeds.size()},
                 {"rho", w.rho()}};
  return res;
}

CheckResult check_sublinear_detector(const VerifyOptions&) {
  CheckResult res;
  res.name = "sublinear_detector";
  const double rho = 0.5;
  std::vector<SublinearSample> terminal;
  std::vector<SublinearSample> alternating;
  for (const int horizon : {100, 200, 400, 800}) {
    terminal.push_back(
        {horizon, exact_stats(CommScheme::explicit_set({horizon}, horizon), rho, Rule::after)});
    alternating.push_back({horizon, exact_stats(CommScheme::i1(3, 2, horizon), rho, Rule::after)});
  }
  const SublinearReport single = sublinear_check(terminal);
  const SublinearReport alt = sublinear_check(alternating);
  const bool single_ok = std::abs(single.slope_a - 1.0) <= 0.1 &&
                         std::abs(single.slope_b - 2.0) <= 0.1 && !single.sublinear_ok;
  auto small = [](bool degenerate, double slope) { return degenerate || slope <= 0.1; };
  const bool alt_ok = small(alt.degenerate_a, alt.slope_a) &&
                      small(alt.degenerate_b, alt.slope_b) &&
                      small(alt.degenerate_c, alt.slope_c) && alt.sublinear_ok && alt.speedup_ok;
  res.metric = std::max({std::abs(single.slope_a - 1.0), std::abs(single.slope_b - 2.0),
                         std::abs(alt.slope_a), std::abs(alt.slope_b)});
  res.threshold = 0.1;
  res.pass = single_ok && alt_ok;
  res.details = {{"terminal_scheme", {{"slope_a", single.slope_a}, {"slope_b", single.slope_b}}},
                 {"alternating",
                  {{"slope_a", alt.slope_a},
                   {"slope_b", alt.slope_b},
                   {"slope_c", alt.slope_c},
                   {"sublinear_ok", alt.sublinear_ok},
                   {"speedup_ok", alt.speedup_ok}}}};
  return res;
}

}  // namespace

json VerifyReport::to_json() const {
  json out;
  out["format_version"] = kFormatVersion;
  out["all_pass"] = all_pass;
  json arr = json::array();
  for (const auto& c : checks) {
    arr.push_back({{"name", c.name},
                   {"pass", c.pass},
                   {"metric", c.metric},
                   {"threshold", c.threshold},
                   {"details", c.details}});
  }
  out["checks"] = arr;
  return out;
}

VerifyReport run_verify_battery(const VerifyOptions& opts) {
  VerifyReport report;
  report.checks.push_back(check_rho_products(opts));
  report.checks.push_back(check_stats_equivalence(opts));
  report.checks.push_back(check_dominance_thm3(opts));
  report.checks.push_back(check_dominance_thm4(opts));
  report.checks.push_back(check_dominance_before_rule(opts));
  report.checks.push_back(check_dominance_thm2(opts));
  report.checks.push_back(check_decomposition(opts));
  report.checks.push_back(check_decomposition_negative_control(opts));
  if (opts.run_monte_carlo) {
    report.checks.push_back(check_grad_norm_bound_monte_carlo(opts));
  }
  report.checks.push_back(check_sublinear_detector(opts));
  report.all_pass = true;
  for (const auto& c : report.checks) report.all_pass = report.all_pass && c.pass;
  return report;
}

}  // namespace ldsgd
