#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "ldsgd/mixing.hpp"
#include "ldsgd/problems.hpp"
#include "ldsgd/schemes.hpp"

namespace ldsgd {

struct TracePoint {
  std::int64_t step = 0;
  double loss = 0.0;
  double grad_norm_sq = 0.0;  // |grad f(xbar_t)|^2, exact oracle
  double residual = 0.0;      // (1/n) sum_k |x_t^(k) - xbar_t|^2, realized
  std::int64_t comms = 0;     // |members ∩ [1..t]|
};

// Optional per-step record of the stochastic gradient matrices and the
// parameter states, for replaying the residual decomposition identity.
struct GradientLog {
  bool enabled = false;
  bool disabled_by_cap = false;  // requested but the estimate exceeded cap_bytes
  std::size_t cap_bytes = std::size_t(1) << 30;
  std::vector<Eigen::MatrixXd> gradients;  // gradients[s-1] = G(X_s; xi_s), s in [1..T]
  std::vector<Eigen::MatrixXd> states;     // states[t-1] = X_t, t in [1..T+1]
};

struct RunTrace {
  std::vector<TracePoint> points;  // at t = 1, multiples of eval_every, and T
  double mean_grad_norm_sq = 0.0;  // (1/T) sum over every step t in [1..T]
  std::int64_t total_comms = 0;
  std::int64_t horizon = 0;
  std::uint64_t seed = 0;
  Rule rule = Rule::after;
  double final_loss = 0.0;      // at t = T
  double final_residual = 0.0;  // at t = T
  std::shared_ptr<const GradientLog> gradient_log;  // null unless requested
};

struct RunOptions {
  double eta = 0.1;
  std::uint64_t seed = 0;
  Rule rule = Rule::after;
  std::int64_t eval_every = 1;
  bool log_gradients = false;
  std::size_t log_cap_bytes = std::size_t(1) << 30;
  int threads = 1;
  // overrides the consensus initialization X_1 = x_1 * 1'; columns need not
  // be equal (used for contraction experiments)
  std::optional<Eigen::MatrixXd> initial_state;
};

// Executes T = scheme.horizon() steps of the scheduled decentralized update:
//   after:  X_{t+1} = (X_t - eta G(X_t)) W_t
//   before: X_{t+1} = X_t W_t - eta G(X_t)
// with W_t = W at communication steps and the identity elsewhere.
// Deterministic: identical inputs, including the thread count, produce
// bitwise-identical traces.
RunTrace run(const Problem& problem, const MixingMatrix& w, const CommScheme& scheme,
             const RunOptions& opts);

// (1/n) sum_k |col_k - mean|^2
double residual(const Eigen::MatrixXd& x);

// X W computed column-by-column with a fixed accumulation order; `in`
// and `out` must be distinct matrices
void mix_columns(const Eigen::MatrixXd& in, const Eigen::MatrixXd& w, Eigen::MatrixXd& out,
                 int threads = 1);

struct DecompositionCheck {
  double max_abs = 0.0;
  double max_rel = 0.0;  // per-step deviation over the larger side's magnitude
  std::vector<std::int64_t> steps;
};

// Replays the identity X_t (I - Q) = -eta * sum_{s<t} G_s (Phi_{s,t-1} - Q)
// (window shifted to s+1 for the before rule) against the logged run,
// accumulating the right side one gossip factor at a time. `steps` defaults
// to every t in [1..T+1].
DecompositionCheck verify_decomposition(const RunTrace& trace, const MixingMatrix& w,
                                        const CommScheme& scheme, double eta, Rule rule,
                                        std::vector<std::int64_t> steps = {});

struct GradNormEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::vector<double> per_seed;
  std::vector<std::uint64_t> divergent_seeds;
};

// Monte Carlo estimate over seeds of (1/T) sum_t |grad f(xbar_t)|^2 with its
// standard error. Diverged seeds abort unless skip_divergent is set, in
// which case they are excluded and reported.
GradNormEstimate estimate_mean_grad_norm(const Problem& problem, const MixingMatrix& w,
                                  const CommScheme& scheme, double eta,
                                  const std::vector<std::uint64_t>& seeds, Rule rule,
                                  int threads = 1, bool skip_divergent = false);

}  // namespace ldsgd
