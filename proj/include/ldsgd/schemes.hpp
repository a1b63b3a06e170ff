#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ldsgd/errors.hpp"

namespace ldsgd {

// Whether gossip is applied after the gradient step (X <- (X - eta*G) W) or
// before it (X <- X W - eta*G). The same tag selects the matching variant of
// the scheme statistics.
enum class Rule { after, before };

const char* to_string(Rule rule);
Rule rule_from_string(std::string_view s);

enum class SchemeKind { i0, i1, i2, explicit_set };

// A communication set over steps [1..T]: the steps at which the gossip
// matrix is applied. Members are kept sorted and duplicate-free.
class CommScheme {
 public:
  // multiples of `interval` in [1..horizon]
  static CommScheme i0(int interval, int horizon);

  // alternate `local_steps` pure-gradient steps with `gossip_steps` gossip
  // steps; local_steps = 0 yields every step
  static CommScheme i1(int local_steps, int gossip_steps, int horizon);

  // staged schedule that halves local_steps every `stage_rounds` periods
  // until only gossip steps remain
  static CommScheme i2(int local_steps, int gossip_steps, int stage_rounds, int horizon);

  static CommScheme explicit_set(std::vector<int> members, int horizon);

  int horizon() const { return horizon_; }
  const std::vector<int>& members() const { return members_; }
  const std::string& label() const { return label_; }
  SchemeKind kind() const { return kind_; }
  const std::vector<int>& params() const { return params_; }

  bool contains(int t) const;
  // |members ∩ [1..t]|
  int comms_through(int t) const;
  // longest stretch of consecutive steps without communication, with
  // sentinels 0 and T
  int gap() const;
  // |[s..t-1] ∩ members|; 0 whenever s >= t
  int rho_exponent(int s, int t) const;

 private:
  CommScheme(std::vector<int> members, int horizon, std::string label, SchemeKind kind,
             std::vector<int> params);

  std::vector<int> members_;
  int horizon_;
  std::string label_;
  SchemeKind kind_;
  std::vector<int> params_;
};

// smallest admissible horizon for the staged schedule (end of its last stage)
int i2_min_horizon(int local_steps, int gossip_steps, int stage_rounds);

// The contraction aggregates that drive every convergence bound:
//   a_t = (1/T) sum_t sum_{s<t} r(s,t)^2
//   b_t = (1/T) sum_t (sum_{s<t} r(s,t))^2
//   c_t = max_s sum_{t>s} r(s,t) * (sum_{l<t} r(l,t))
// where r(s,t) = rho^{|[s..t-1] ∩ members|} for the after rule and the
// window shifts to [s+1..t-1] for the before rule.
struct SchemeStats {
  double a_t = 0.0;
  double b_t = 0.0;
  double c_t = 0.0;
  int gap = 0;
  Rule variant = Rule::after;
};

inline constexpr int kStatsHorizonCapFull = 20000;   // includes the O(T^2) c_t
inline constexpr int kStatsHorizonCapAB = 100000;    // a_t/b_t only

// Exact statistics via O(T) running-sum recurrences for a_t/b_t and the
// O(T^2) definition for c_t.
SchemeStats exact_stats(const CommScheme& scheme, double rho, Rule variant = Rule::after);

// a_t/b_t only (c_t is NaN); admits longer horizons.
SchemeStats exact_stats_ab(const CommScheme& scheme, double rho, Rule variant = Rule::after);

// Straight evaluation of the definitional sums from a precomputed
// contraction table. Verification oracle; restricted to small horizons.
SchemeStats definitional_stats(const CommScheme& scheme, double rho, Rule variant = Rule::after);

}  // namespace ldsgd
