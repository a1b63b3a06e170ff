#include "ldsgd/bounds.hpp"

#include <cmath>
#include <limits>

namespace ldsgd {

namespace {

void check_rho(double rho) {
  if (!(rho >= 0.0 && rho < 1.0)) fail(Errc::invalid_argument, "rho must lie in [0, 1)");
}

void check_constants(const ProblemConstants& c) {
  if (!(c.smoothness_l > 0.0) || !std::isfinite(c.smoothness_l)) {
    fail(Errc::invalid_constants, "smoothness constant L must be finite and positive");
  }
  if (c.grad_variance < 0.0 || c.noniid_kappa < 0.0 || c.init_error < 0.0 || c.nodes < 1) {
    fail(Errc::invalid_constants, "constants must be nonnegative with at least one node");
  }
}

}  // namespace

double lr_ceiling(const ProblemConstants& consts, double c_t) {
  check_constants(consts);
  if (!(c_t >= 0.0)) fail(Errc::invalid_argument, "c_t must be nonnegative");
  const double l = consts.smoothness_l;
  const double base = 1.0 / (2.0 * l);
  if (c_t == 0.0) return base;
  return std::min(base, 1.0 / (4.0 * std::sqrt(2.0) * l * std::sqrt(c_t)));
}

BoundValue grad_norm_bound(const ProblemConstants& consts, double eta, int horizon,
                        const SchemeStats& stats) {
  check_constants(consts);
  if (horizon < 1) fail(Errc::invalid_argument, "horizon must be positive");
  if (!(eta > 0.0)) fail(Errc::invalid_argument, "eta must be positive");
  const double l = consts.smoothness_l;
  const double value = 2.0 * consts.init_error / (eta * horizon) +
                       eta * l * consts.grad_variance / consts.nodes +
                       4.0 * eta * eta * l * l *
                           (stats.a_t * consts.grad_variance + stats.b_t * consts.noniid_kappa);
  const bool in_regime = std::isnan(stats.c_t) ? true : eta < lr_ceiling(consts, stats.c_t);
  return {value, in_regime};
}

BoundValue grad_norm_bound_speedup(const ProblemConstants& consts, int horizon,
                          const SchemeStats& stats) {
  check_constants(consts);
  if (horizon < 1) fail(Errc::invalid_argument, "horizon must be positive");
  const double l = consts.smoothness_l;
  const double n = consts.nodes;
  const double t = horizon;
  const double value =
      (2.0 * consts.init_error + l * consts.grad_variance) / std::sqrt(n * t) +
      4.0 * n * l * l * (stats.a_t * consts.grad_variance + stats.b_t * consts.noniid_kappa) / t;
  const double threshold =
      4.0 * l * l * n * std::max(1.0, std::isnan(stats.c_t) ? 1.0 : 4.0 * stats.c_t);
  return {value, t > threshold};
}

GapBounds gap_bounds(int gap, double rho) {
  check_rho(rho);
  if (gap < 1) fail(Errc::invalid_argument, "gap must be positive");
  GapBounds out;
  out.a_stated = gap * (1.0 + rho * rho) / (1.0 - rho * rho);
  out.a_proof = gap * (1.0 + rho) / (1.0 - rho) - 0.5;
  const double g = static_cast<double>(gap);
  out.bc = g * g / ((1.0 - rho) * (1.0 - rho));
  return out;
}

AlternatingBounds alternating_bounds(int local_steps, int gossip_steps, double rho) {
  check_rho(rho);
  if (local_steps < 0 || gossip_steps < 1) fail(Errc::invalid_argument, "invalid i1 parameters");
  const double i1 = local_steps;
  const double period = local_steps + gossip_steps;
  const double r2 = rho * rho;
  const double rg = std::pow(rho, gossip_steps);
  const double rg2 = std::pow(rho, 2.0 * gossip_steps);
  AlternatingBounds out;
  out.a_bound = (1.0 / (2.0 * period)) *
                    ((1.0 + rg2) / (1.0 - rg2) * i1 * i1 + (1.0 + r2) / (1.0 - r2) * i1) +
                r2 / (1.0 - r2);
  out.k = i1 / (1.0 - rg) + rho / (1.0 - rho);
  return out;
}

StagedBounds staged_bounds(int local_steps, int gossip_steps, int stage_rounds, double rho,
                           int horizon) {
  check_rho(rho);
  const int min_t = i2_min_horizon(local_steps, gossip_steps, stage_rounds);
  if (horizon < min_t) {
    fail(Errc::horizon_too_short, "i2 bounds need T >= " + std::to_string(min_t) + " (got " +
                                      std::to_string(horizon) + ")");
  }
  const double i1 = local_steps;
  const double t = horizon;
  const double tail = t - min_t;
  const double r2 = rho * rho;
  const double rg = std::pow(rho, gossip_steps);
  const double rg2 = std::pow(rho, 2.0 * gossip_steps);
  const double k = i1 / (1.0 - rg) + rho / (1.0 - rho);
  const double stage_frac = 1.0 - static_cast<double>(min_t) / t;

  StagedBounds out;
  out.min_horizon = min_t;
  out.k = k;
  out.a_bound = (i1 / (1.0 - rg2)) * std::pow(rho, 2.0 * tail) / t + stage_frac * r2 / (1.0 - r2);
  out.b_bound = k * ((i1 / (1.0 - rg)) * std::pow(rho, tail) / t + stage_frac * rho / (1.0 - rho));
  out.c_bound = k * k;
  const double tail_sharp = tail + gossip_steps - 1.0;
  out.a_bound_sharp =
      (i1 / (1.0 - rg2)) * std::pow(rho, 2.0 * tail_sharp) / t + stage_frac * r2 / (1.0 - r2);
  out.b_bound_sharp =
      k * ((i1 / (1.0 - rg)) * std::pow(rho, tail_sharp) / t + stage_frac * rho / (1.0 - rho));

  // stage/tail split with the stage mass kept: every per-step sum is at most
  // K (or its rho^2 counterpart), and past the last stage the decayed stage
  // contribution telescopes into a single geometric factor
  const double k2 = i1 / (1.0 - rg2) + r2 / (1.0 - r2);
  const double stage_part = static_cast<double>(min_t) / t;
  out.a_bound_sound = stage_part * k2 + k2 / ((1.0 - r2) * t) + stage_frac * r2 / (1.0 - r2);
  const double tail_ratio = rho / (1.0 - rho);
  out.b_bound_sound = stage_part * k * k +
                      (k * k / (1.0 - r2) + 2.0 * k * tail_ratio / (1.0 - rho)) / t +
                      stage_frac * tail_ratio * tail_ratio;
  return out;
}

BeforeRuleBounds before_rule_bounds_for(int local_steps, int gossip_steps, double rho) {
  check_rho(rho);
  if (local_steps < 0 || gossip_steps < 1) fail(Errc::invalid_argument, "invalid i1 parameters");
  const double i1 = local_steps;
  const double period = local_steps + gossip_steps;
  const double r2 = rho * rho;
  const double rg = std::pow(rho, gossip_steps);
  const double rg2 = std::pow(rho, 2.0 * gossip_steps);
  BeforeRuleBounds out;
  out.a_bound = (1.0 / (2.0 * period)) *
                    ((1.0 + rg2) / (1.0 - rg2) * i1 * i1 + (1.0 + r2) / (1.0 - r2) * i1) +
                1.0 / (1.0 - r2);
  out.k_tilde = i1 / (1.0 - rg) + 1.0 / (1.0 - rho);
  return out;
}

namespace {

// least-squares slope of log(values) against log(horizons); NaN if any
// value is nonpositive (degenerate)
double loglog_slope(const std::vector<SublinearSample>& samples,
                    double SchemeStats::*field, bool* degenerate) {
  *degenerate = false;
  for (const auto& s : samples) {
    if (!(s.stats.*field > 0.0)) {
      *degenerate = true;
      return std::numeric_limits<double>::quiet_NaN();
    }
  }
  const double n = static_cast<double>(samples.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& s : samples) {
    const double x = std::log(static_cast<double>(s.horizon));
    const double y = std::log(s.stats.*field);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

SublinearReport sublinear_check(const std::vector<SublinearSample>& samples) {
  if (samples.size() < 3) {
    fail(Errc::insufficient_data, "sublinear check needs at least 3 horizon samples");
  }
  for (std::size_t i = 1; i < samples.size(); ++i) {
    if (samples[i].horizon <= samples[i - 1].horizon) {
      fail(Errc::invalid_argument, "horizons must be strictly increasing");
    }
  }
  SublinearReport rep;
  rep.slope_a = loglog_slope(samples, &SchemeStats::a_t, &rep.degenerate_a);
  rep.slope_b = loglog_slope(samples, &SchemeStats::b_t, &rep.degenerate_b);
  rep.slope_c = loglog_slope(samples, &SchemeStats::c_t, &rep.degenerate_c);
  auto below = [](bool degenerate, double slope, double cutoff) {
    return degenerate || slope < cutoff;
  };
  rep.sublinear_ok = below(rep.degenerate_a, rep.slope_a, 0.9) &&
                     below(rep.degenerate_b, rep.slope_b, 0.9) &&
                     below(rep.degenerate_c, rep.slope_c, 0.9);
  rep.speedup_ok = below(rep.degenerate_a, rep.slope_a, 0.6 + 1e-12) &&
                   below(rep.degenerate_b, rep.slope_b, 0.6 + 1e-12) &&
                   below(rep.degenerate_c, rep.slope_c, 0.9);
  return rep;
}

}  // namespace ldsgd
