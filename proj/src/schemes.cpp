#include "ldsgd/schemes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace ldsgd {

const char* to_string(Rule rule) { return rule == Rule::after ? "after" : "before"; }

Rule rule_from_string(std::string_view s) {
  if (s == "after") return Rule::after;
  if (s == "before") return Rule::before;
  fail(Errc::invalid_argument, "rule must be 'after' or 'before'");
}

namespace {

std::string format_label(const char* fmt, int a, int b = 0, int c = 0) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, a, b, c);
  return buf;
}

void check_horizon(int horizon) {
  if (horizon < 1) fail(Errc::invalid_scheme, "horizon must be positive");
}

// {t in [rounds*(local+gossip)] : t mod (local+gossip) not in [1..local]}
std::vector<int> alternating_block(int local, int gossip, int rounds) {
  const int period = local + gossip;
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(rounds) * gossip);
  for (int t = 1; t <= rounds * period; ++t) {
    const int r = t % period;
    if (r == 0 || r > local) out.push_back(t);
  }
  return out;
}

}  // namespace

CommScheme::CommScheme(std::vector<int> members, int horizon, std::string label, SchemeKind kind,
                       std::vector<int> params)
    : members_(std::move(members)),
      horizon_(horizon),
      label_(std::move(label)),
      kind_(kind),
      params_(std::move(params)) {}

CommScheme CommScheme::i0(int interval, int horizon) {
  check_horizon(horizon);
  if (interval < 1 || interval > horizon) {
    fail(Errc::invalid_scheme, "i0 interval must satisfy 1 <= I <= T");
  }
  std::vector<int> members;
  for (int t = interval; t <= horizon; t += interval) members.push_back(t);
  return CommScheme(std::move(members), horizon, format_label("i0(%d)", interval),
                    SchemeKind::i0, {interval});
}

CommScheme CommScheme::i1(int local_steps, int gossip_steps, int horizon) {
  check_horizon(horizon);
  if (gossip_steps < 1) fail(Errc::invalid_scheme, "i1 needs at least one gossip step");
  if (local_steps < 0) fail(Errc::invalid_scheme, "i1 local step count must be >= 0");
  const int period = local_steps + gossip_steps;
  std::vector<int> members;
  for (int t = 1; t <= horizon; ++t) {
    const int r = t % period;
    if (r == 0 || r > local_steps) members.push_back(t);
  }
  return CommScheme(std::move(members), horizon,
                    format_label("i1(%d,%d)", local_steps, gossip_steps), SchemeKind::i1,
                    {local_steps, gossip_steps});
}

CommScheme CommScheme::i2(int local_steps, int gossip_steps, int stage_rounds, int horizon) {
  check_horizon(horizon);
  if (gossip_steps < 1) fail(Errc::invalid_scheme, "i2 needs at least one gossip step");
  if (stage_rounds < 1) fail(Errc::invalid_scheme, "i2 needs at least one round per stage");
  if (local_steps < 0) fail(Errc::invalid_scheme, "i2 local step count must be >= 0");

  int stages = 0;  // ceil(log2(local_steps)) extra halving stages
  while ((1 << stages) < local_steps) ++stages;

  std::vector<int> members;
  int offset = 0;
  for (int j = 0; j <= stages; ++j) {
    const int local = local_steps >> j;
    for (int t : alternating_block(local, gossip_steps, stage_rounds)) {
      members.push_back(t + offset);
    }
    offset += stage_rounds * (local + gossip_steps);  // = max of this stage's block
  }
  const int last_stage_end = offset;
  if (horizon < last_stage_end) {
    fail(Errc::horizon_too_short,
         "i2 schedule needs T >= " + std::to_string(last_stage_end) + " (got " +
             std::to_string(horizon) + ")");
  }
  for (int t = last_stage_end; t <= horizon; ++t) members.push_back(t);
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());
  return CommScheme(std::move(members), horizon,
                    format_label("i2(%d,%d,%d)", local_steps, gossip_steps, stage_rounds),
                    SchemeKind::i2, {local_steps, gossip_steps, stage_rounds});
}

CommScheme CommScheme::explicit_set(std::vector<int> members, int horizon) {
  check_horizon(horizon);
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());
  if (!members.empty() && (members.front() < 1 || members.back() > horizon)) {
    fail(Errc::invalid_scheme, "explicit members must lie in [1..T]");
  }
  return CommScheme(std::move(members), horizon, "explicit", SchemeKind::explicit_set, {});
}

int i2_min_horizon(int local_steps, int gossip_steps, int stage_rounds) {
  if (gossip_steps < 1 || stage_rounds < 1 || local_steps < 0) {
    fail(Errc::invalid_scheme, "invalid i2 parameters");
  }
  int stages = 0;
  while ((1 << stages) < local_steps) ++stages;
  int offset = 0;
  for (int j = 0; j <= stages; ++j) {
    offset += stage_rounds * ((local_steps >> j) + gossip_steps);
  }
  return offset;
}

bool CommScheme::contains(int t) const {
  return std::binary_search(members_.begin(), members_.end(), t);
}

int CommScheme::comms_through(int t) const {
  return static_cast<int>(std::upper_bound(members_.begin(), members_.end(), t) -
                          members_.begin());
}

int CommScheme::gap() const {
  int best = 0;
  int prev = 0;
  for (int e : members_) {
    best = std::max(best, e - prev);
    prev = e;
  }
  return std::max(best, horizon_ - prev);
}

int CommScheme::rho_exponent(int s, int t) const {
  if (s < 1 || t > horizon_ + 1) {
    fail(Errc::invalid_argument, "rho_exponent expects 1 <= s and t <= T+1");
  }
  if (s >= t) return 0;
  const auto lo = std::lower_bound(members_.begin(), members_.end(), s);
  const auto hi = std::upper_bound(members_.begin(), members_.end(), t - 1);
  return static_cast<int>(hi - lo);
}

namespace {

struct RunningSums {
  // sums over s in [1..t-1] of r(s,t-1) and r(s,t-1)^2 for the current t,
  // advanced by S <- rho_t (S + 1) with rho_t = rho at communication steps
  double linear = 0.0;
  double squared = 0.0;
  double head = 1.0;          // r(1, t-1)
  double head_sq = 1.0;

  void advance(bool comm, double rho) {
    const double r = comm ? rho : 1.0;
    linear = r * (linear + 1.0);
    squared = r * r * (squared + 1.0);
    head *= r;
    head_sq *= r * r;
  }
};

}  // namespace

static SchemeStats stats_ab_impl(const CommScheme& scheme, double rho, Rule variant,
                                 std::vector<double>* inner_out) {
  if (!(rho >= 0.0 && rho < 1.0)) {
    fail(Errc::invalid_argument, "rho must lie in [0, 1)");
  }
  const int horizon = scheme.horizon();
  std::vector<char> in(static_cast<std::size_t>(horizon) + 1, 0);
  for (int e : scheme.members()) in[e] = 1;

  RunningSums sums;
  double acc_a = 0.0;
  double acc_b = 0.0;
  if (inner_out) inner_out->assign(static_cast<std::size_t>(horizon) + 1, 0.0);
  for (int t = 1; t <= horizon; ++t) {
    double lin = sums.linear;
    double sq = sums.squared;
    if (variant == Rule::before) {
      // shift the window: sum_s r(s+1,t-1) = sum_s r(s,t-1) + 1 - r(1,t-1)
      lin = sums.linear + 1.0 - sums.head;
      sq = sums.squared + 1.0 - sums.head_sq;
    }
    acc_a += sq;
    acc_b += lin * lin;
    if (inner_out) (*inner_out)[t] = lin;
    sums.advance(in[t] != 0, rho);
  }

  SchemeStats out;
  out.a_t = acc_a / horizon;
  out.b_t = acc_b / horizon;
  out.c_t = std::numeric_limits<double>::quiet_NaN();
  out.gap = scheme.gap();
  out.variant = variant;
  return out;
}

SchemeStats exact_stats_ab(const CommScheme& scheme, double rho, Rule variant) {
  if (scheme.horizon() > kStatsHorizonCapAB) {
    fail(Errc::size_limit, "horizon exceeds the a/b statistics cap (" +
                               std::to_string(kStatsHorizonCapAB) +
                               "); use the closed-form bounds instead");
  }
  return stats_ab_impl(scheme, rho, variant, nullptr);
}

SchemeStats exact_stats(const CommScheme& scheme, double rho, Rule variant) {
  const int horizon = scheme.horizon();
  if (horizon > kStatsHorizonCapFull) {
    fail(Errc::size_limit, "horizon exceeds the exact-statistics cap (" +
                               std::to_string(kStatsHorizonCapFull) +
                               "); use the closed-form bounds instead");
  }
  std::vector<double> inner;
  SchemeStats out = stats_ab_impl(scheme, rho, variant, &inner);

  std::vector<char> in(static_cast<std::size_t>(horizon) + 1, 0);
  for (int e : scheme.members()) in[e] = 1;

  // c_t = max_s sum_{t>s} r(s,t-1) * inner[t] with r maintained as a running
  // product along t; the before variant starts one factor later
  double best = 0.0;
  for (int s = 1; s <= horizon - 1; ++s) {
    double prod = 1.0;
    double sum = 0.0;
    for (int t = s + 1; t <= horizon; ++t) {
      const int l = t - 1;  // index entering the window
      if (variant == Rule::after || t > s + 1) {
        if (in[l]) prod *= rho;
      }
      sum += prod * inner[t];
    }
    best = std::max(best, sum);
  }
  out.c_t = best;
  return out;
}

SchemeStats definitional_stats(const CommScheme& scheme, double rho, Rule variant) {
  if (!(rho >= 0.0 && rho < 1.0)) {
    fail(Errc::invalid_argument, "rho must lie in [0, 1)");
  }
  const int horizon = scheme.horizon();
  if (horizon > 4096) {
    fail(Errc::size_limit, "definitional evaluation is restricted to T <= 4096");
  }
  std::vector<char> in(static_cast<std::size_t>(horizon) + 1, 0);
  for (int e : scheme.members()) in[e] = 1;

  // contraction table r(s, u) = rho^{|[s..u] ∩ members|}, u in [s-1 .. T],
  // with exponents counted by direct scan
  const int rows = horizon + 2;
  const int cols = horizon + 1;
  std::vector<double> table(static_cast<std::size_t>(rows) * cols, 1.0);
  auto at = [&](int s, int u) -> double& {
    return table[static_cast<std::size_t>(s) * cols + u];
  };
  for (int s = 1; s <= horizon + 1; ++s) {
    int count = 0;
    for (int u = s; u <= horizon; ++u) {
      if (in[u]) ++count;
      at(s, u) = std::pow(rho, count);
    }
  }
  auto factor = [&](int s, int t) {
    const int lo = (variant == Rule::after) ? s : s + 1;
    if (lo > t - 1) return 1.0;
    return at(lo, t - 1);
  };

  double acc_a = 0.0;
  double acc_b = 0.0;
  std::vector<double> inner(static_cast<std::size_t>(horizon) + 1, 0.0);
  for (int t = 1; t <= horizon; ++t) {
    double lin = 0.0;
    double sq = 0.0;
    for (int s = 1; s <= t - 1; ++s) {
      const double r = factor(s, t);
      lin += r;
      sq += r * r;
    }
    inner[t] = lin;
    acc_a += sq;
    acc_b += lin * lin;
  }
  double best = 0.0;
  for (int s = 1; s <= horizon - 1; ++s) {
    double sum = 0.0;
    for (int t = s + 1; t <= horizon; ++t) sum += factor(s, t) * inner[t];
    best = std::max(best, sum);
  }

  SchemeStats out;
  out.a_t = acc_a / horizon;
  out.b_t = acc_b / horizon;
  out.c_t = best;
  out.gap = scheme.gap();
  out.variant = variant;
  return out;
}

}  // namespace ldsgd
