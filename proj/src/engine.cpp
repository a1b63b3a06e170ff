#include "ldsgd/engine.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <thread>

namespace ldsgd {

namespace {

// column mean accumulated in fixed node order
Eigen::VectorXd column_mean(const Eigen::MatrixXd& x) {
  Eigen::VectorXd acc = x.col(0);
  for (Eigen::Index k = 1; k < x.cols(); ++k) acc += x.col(k);
  return acc / static_cast<double>(x.cols());
}

// runs fn(begin, end) over a partition of [0, n); chunk boundaries depend
// only on n and threads, and each chunk writes disjoint columns, so results
// are independent of scheduling
template <typename Fn>
void parallel_over(int n, int threads, Fn&& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(threads);
  const int chunk = (n + threads - 1) / threads;
  for (int w = 0; w < threads; ++w) {
    const int begin = w * chunk;
    const int end = std::min(n, begin + chunk);
    if (begin >= end) break;
    workers.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (auto& t : workers) t.join();
}

}  // namespace

void mix_columns(const Eigen::MatrixXd& in, const Eigen::MatrixXd& w, Eigen::MatrixXd& out,
                 int threads) {
  const int n = static_cast<int>(in.cols());
  out.resize(in.rows(), n);
  parallel_over(n, threads, [&](int begin, int end) {
    for (int k = begin; k < end; ++k) {
      auto col = out.col(k);
      col.setZero();
      for (int l = 0; l < n; ++l) col += w(l, k) * in.col(l);
    }
  });
}

double residual(const Eigen::MatrixXd& x) {
  const Eigen::VectorXd xbar = column_mean(x);
  double acc = 0.0;
  for (Eigen::Index k = 0; k < x.cols(); ++k) acc += (x.col(k) - xbar).squaredNorm();
  return acc / static_cast<double>(x.cols());
}

RunTrace run(const Problem& problem, const MixingMatrix& w, const CommScheme& scheme,
             const RunOptions& opts) {
  const int n = w.nodes();
  const int d = problem.dim();
  if (problem.nodes() != n) {
    fail(Errc::invalid_config, "problem has " + std::to_string(problem.nodes()) +
                                   " nodes but the topology has " + std::to_string(n));
  }
  if (!std::isfinite(opts.eta) || opts.eta < 0.0) {
    fail(Errc::invalid_argument, "eta must be finite and nonnegative");
  }
  if (opts.eval_every < 1) fail(Errc::invalid_argument, "eval_every must be positive");
  const std::int64_t horizon = scheme.horizon();

  Eigen::MatrixXd x(d, n);
  if (opts.initial_state) {
    if (opts.initial_state->rows() != d || opts.initial_state->cols() != n) {
      fail(Errc::invalid_config, "initial state must be dim x nodes");
    }
    x = *opts.initial_state;
  } else {
    const Eigen::VectorXd x0 = problem.initial_point();
    for (int k = 0; k < n; ++k) x.col(k) = x0;
  }

  auto glog = std::make_shared<GradientLog>();
  glog->cap_bytes = opts.log_cap_bytes;
  if (opts.log_gradients) {
    const std::size_t need = static_cast<std::size_t>(2 * horizon + 1) *
                             static_cast<std::size_t>(d) * static_cast<std::size_t>(n) *
                             sizeof(double);
    if (need > opts.log_cap_bytes) {
      glog->disabled_by_cap = true;  // keep running, drop the log
    } else {
      glog->enabled = true;
      glog->gradients.reserve(horizon);
      glog->states.reserve(horizon + 1);
      glog->states.push_back(x);
    }
  }

  RunTrace trace;
  trace.horizon = horizon;
  trace.seed = opts.seed;
  trace.rule = opts.rule;

  Eigen::MatrixXd grads(d, n);
  Eigen::MatrixXd mixed(d, n);
  double grad_norm_acc = 0.0;

  for (std::int64_t t = 1; t <= horizon; ++t) {
    const Eigen::VectorXd xbar = column_mean(x);
    const double gns = problem.full_gradient(xbar).squaredNorm();
    grad_norm_acc += gns;
    if (t == 1 || t == horizon || t % opts.eval_every == 0) {
      trace.points.push_back({t, problem.objective(xbar), gns, residual(x),
                              scheme.comms_through(static_cast<int>(t))});
    }

    parallel_over(n, opts.threads, [&](int begin, int end) {
      for (int k = begin; k < end; ++k) {
        problem.stochastic_gradient(k, x.col(k), opts.seed, t, grads.col(k));
      }
    });
    if (glog->enabled) glog->gradients.push_back(grads);

    const bool comm = scheme.contains(static_cast<int>(t));
    if (opts.rule == Rule::after) {
      x -= opts.eta * grads;
      if (comm) {
        mix_columns(x, w.weights(), mixed, opts.threads);
        x.swap(mixed);
      }
    } else {
      if (comm) {
        mix_columns(x, w.weights(), mixed, opts.threads);
        x.swap(mixed);
      }
      x -= opts.eta * grads;
    }

    if (!x.allFinite()) {
      throw DivergenceError(t, "non-finite parameter entry at step " + std::to_string(t));
    }
    if (glog->enabled) glog->states.push_back(x);
  }

  trace.mean_grad_norm_sq = grad_norm_acc / static_cast<double>(horizon);
  trace.total_comms = static_cast<std::int64_t>(scheme.members().size());
  trace.final_loss = trace.points.back().loss;
  trace.final_residual = trace.points.back().residual;
  if (opts.log_gradients) trace.gradient_log = glog;
  return trace;
}

DecompositionCheck verify_decomposition(const RunTrace& trace, const MixingMatrix& w,
                                        const CommScheme& scheme, double eta, Rule rule,
                                        std::vector<std::int64_t> steps) {
  const auto& log = trace.gradient_log;
  if (!log || !log->enabled || log->disabled_by_cap) {
    fail(Errc::precondition, "decomposition check needs a run with gradient logging enabled");
  }
  const std::int64_t horizon = trace.horizon;
  if (steps.empty()) {
    steps.reserve(horizon + 1);
    for (std::int64_t t = 1; t <= horizon + 1; ++t) steps.push_back(t);
  }
  std::sort(steps.begin(), steps.end());
  for (std::int64_t t : steps) {
    if (t < 1 || t > horizon + 1) {
      fail(Errc::invalid_argument, "check steps must lie in [1..T+1]");
    }
  }

  const int d = static_cast<int>(log->states.front().rows());
  const int n = static_cast<int>(log->states.front().cols());
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(d, n);   // sum_s G_s Phi_{s or s+1, u}
  Eigen::MatrixXd grad_sum = Eigen::MatrixXd::Zero(d, n);
  Eigen::MatrixXd tmp(d, n);

  DecompositionCheck out;
  out.steps = steps;
  std::size_t next = 0;
  // deviations are judged against the run's own magnitudes: the sides of the
  // identity and the summands eta * G_s that built them (exactly consensual
  // states make both sides vanish, where a per-step ratio would be noise)
  double scale = 0.0;

  auto check_at = [&](std::int64_t t) {
    const Eigen::MatrixXd& state = log->states[static_cast<std::size_t>(t - 1)];
    const Eigen::VectorXd state_mean = column_mean(state);
    const Eigen::VectorXd gsum_mean = column_mean(grad_sum);
    double dev = 0.0;
    for (int k = 0; k < n; ++k) {
      const Eigen::VectorXd lhs = state.col(k) - state_mean;
      const Eigen::VectorXd rhs = -eta * (acc.col(k) - gsum_mean);
      dev = std::max(dev, (lhs - rhs).cwiseAbs().maxCoeff());
      scale = std::max({scale, lhs.cwiseAbs().maxCoeff(), rhs.cwiseAbs().maxCoeff()});
    }
    out.max_abs = std::max(out.max_abs, dev);
  };

  while (next < steps.size() && steps[next] == 1) {
    check_at(1);
    ++next;
  }
  for (std::int64_t u = 1; u <= horizon && next < steps.size(); ++u) {
    const Eigen::MatrixXd& g = log->gradients[static_cast<std::size_t>(u - 1)];
    scale = std::max(scale, eta * g.cwiseAbs().maxCoeff());
    const bool comm = scheme.contains(static_cast<int>(u));
    if (rule == Rule::after) {
      acc += g;
      if (comm) {
        mix_columns(acc, w.weights(), tmp);
        acc.swap(tmp);
      }
    } else {
      if (comm) {
        mix_columns(acc, w.weights(), tmp);
        acc.swap(tmp);
      }
      acc += g;
    }
    grad_sum += g;
    while (next < steps.size() && steps[next] == u + 1) {
      check_at(u + 1);
      ++next;
    }
  }
  if (out.max_abs > 0.0) {
    out.max_rel = out.max_abs / std::max(scale, 1e-300);
  }
  return out;
}

GradNormEstimate estimate_mean_grad_norm(const Problem& problem, const MixingMatrix& w,
                                  const CommScheme& scheme, double eta,
                                  const std::vector<std::uint64_t>& seeds, Rule rule,
                                  int threads, bool skip_divergent) {
  if (seeds.size() < 8) {
    fail(Errc::insufficient_data, "the Monte Carlo estimate needs at least 8 seeds");
  }
  const int m = static_cast<int>(seeds.size());
  std::vector<double> values(m, 0.0);
  std::vector<char> diverged(m, 0);
  std::vector<std::int64_t> diverged_step(m, 0);

  parallel_over(m, threads, [&](int begin, int end) {
    for (int i = begin; i < end; ++i) {
      RunOptions opts;
      opts.eta = eta;
      opts.seed = seeds[i];
      opts.rule = rule;
      opts.eval_every = scheme.horizon();
      try {
        values[i] = run(problem, w, scheme, opts).mean_grad_norm_sq;
      } catch (const DivergenceError& e) {
        diverged[i] = 1;
        diverged_step[i] = e.step();
      }
    }
  });

  GradNormEstimate est;
  for (int i = 0; i < m; ++i) {
    if (diverged[i]) {
      est.divergent_seeds.push_back(seeds[i]);
    } else {
      est.per_seed.push_back(values[i]);
    }
  }
  if (!est.divergent_seeds.empty() && !skip_divergent) {
    throw DivergenceError(diverged_step[0],
                          std::to_string(est.divergent_seeds.size()) +
                              " seed(s) diverged; first at step " +
                              std::to_string(diverged_step[0]));
  }
  if (est.per_seed.size() < 2) {
    fail(Errc::insufficient_data, "fewer than 2 non-divergent seeds");
  }
  double mean = 0.0;
  for (double v : est.per_seed) mean += v;
  mean /= static_cast<double>(est.per_seed.size());
  double var = 0.0;
  for (double v : est.per_seed) var += (v - mean) * (v - mean);
  var /= static_cast<double>(est.per_seed.size() - 1);
  est.mean = mean;
  est.stderr_ = std::sqrt(var / static_cast<double>(est.per_seed.size()));
  return est;
}

}  // namespace ldsgd
