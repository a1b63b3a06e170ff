#include <doctest.h>

#include <cmath>

#include "ldsgd/engine.hpp"
#include "ldsgd/rng.hpp"
#include "support/reference.hpp"

using namespace ldsgd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

RunOptions options(double eta, std::uint64_t seed, Rule rule = Rule::after,
                   std::int64_t eval_every = 1) {
  RunOptions o;
  o.eta = eta;
  o.seed = seed;
  o.rule = rule;
  o.eval_every = eval_every;
  return o;
}

bool bitwise_equal(const MatrixXd& a, const MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a.data()[i] != b.data()[i]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("residual operation") {
  MatrixXd x(1, 2);
  x << 0.0, 2.0;
  CHECK(residual(x) == doctest::Approx(1.0));

  MatrixXd equal(3, 4);
  for (int k = 0; k < 4; ++k) equal.col(k) = VectorXd::Constant(3, 1.7);
  CHECK(residual(equal) == 0.0);

  CounterRng rng(1, 0, 0);
  MatrixXd random(4, 5);
  for (int i = 0; i < random.size(); ++i) random.data()[i] = rng.normal();
  VectorXd shift(4);
  for (int i = 0; i < 4; ++i) shift[i] = rng.normal();
  MatrixXd shifted = random;
  for (int k = 0; k < 5; ++k) shifted.col(k) += shift;
  CHECK(residual(shifted) == doctest::Approx(residual(random)).epsilon(1e-12));
}

TEST_CASE("consensus collapse on the complete graph") {
  const auto p = make_quadratic(5, 4, 0.8, 0.3, 6.0, 3);
  const auto w = MixingMatrix::complete(4);
  const auto scheme = CommScheme::i1(2, 1, 30);
  const RunTrace trace = run(*p, w, scheme, options(0.05, 5));
  REQUIRE(static_cast<int>(trace.points.size()) == 30);
  for (const auto& pt : trace.points) {
    if (pt.step >= 2 && scheme.contains(static_cast<int>(pt.step) - 1)) {
      CHECK(pt.residual <= 1e-12);  // the row after a gossip step is consensual
    }
  }
  CHECK(trace.points.front().residual == 0.0);
  CHECK(trace.total_comms == 10);
}

TEST_CASE("zero step size freezes the run") {
  const auto p = make_quadratic(4, 3, 0.5, 0.4, 5.0, 9);
  const auto w = MixingMatrix::ring(3, 0.4);
  const RunTrace trace = run(*p, w, CommScheme::i1(1, 2, 20), options(0.0, 7));
  const double loss0 = trace.points.front().loss;
  for (const auto& pt : trace.points) {
    CHECK(pt.loss == loss0);
    CHECK(pt.residual == 0.0);
  }
}

TEST_CASE("gossip-every-step run equals the composed two-phase loop bitwise") {
  const auto p = make_quadratic(5, 4, 0.5, 0.2, 8.0, 13);
  const auto w = MixingMatrix::ring(4, 0.5);
  const int horizon = 120;
  for (const std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    auto opts = options(0.05, seed);
    opts.log_gradients = true;
    const RunTrace trace = run(*p, w, CommScheme::i1(0, 1, horizon), opts);
    const auto states = refloops::dsgd_states(*p, w.weights(), 0.05, horizon, seed);
    REQUIRE(trace.gradient_log);
    REQUIRE(trace.gradient_log->states.size() == states.size());
    for (std::size_t t = 0; t < states.size(); ++t) {
      CHECK(bitwise_equal(trace.gradient_log->states[t], states[t]));
    }
  }
}

TEST_CASE("mean is preserved by mixing") {
  CounterRng rng(21, 0, 0);
  const auto w = MixingMatrix::ring(6, 0.3);
  for (int trial = 0; trial < 50; ++trial) {
    MatrixXd x(4, 6);
    for (int i = 0; i < x.size(); ++i) x.data()[i] = 3.0 * rng.normal();
    MatrixXd mixed;
    mix_columns(x, w.weights(), mixed);
    const VectorXd before = x.rowwise().mean();
    const VectorXd after = mixed.rowwise().mean();
    CHECK((before - after).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("update rules coincide without communication or with identity gossip") {
  const auto p = make_quadratic(4, 3, 0.6, 0.3, 4.0, 17);
  const auto w = MixingMatrix::ring(3, 0.4);
  const auto none = CommScheme::explicit_set({}, 40);

  auto opts_a = options(0.07, 3, Rule::after);
  opts_a.log_gradients = true;
  auto opts_b = options(0.07, 3, Rule::before);
  opts_b.log_gradients = true;
  const RunTrace ta = run(*p, w, none, opts_a);
  const RunTrace tb = run(*p, w, none, opts_b);
  CHECK(bitwise_equal(ta.gradient_log->states.back(), tb.gradient_log->states.back()));

  // substituting the identity as the gossip matrix has the same effect
  const auto identity = MixingMatrix::unchecked(MatrixXd::Identity(3, 3), 1.0);
  const auto all = CommScheme::i1(0, 1, 40);
  auto opts_c = options(0.07, 3, Rule::after);
  opts_c.log_gradients = true;
  const RunTrace tc = run(*p, identity, all, opts_c);
  CHECK(bitwise_equal(ta.gradient_log->states.back(), tc.gradient_log->states.back()));
}

TEST_CASE("trace is deterministic across reruns and thread counts") {
  const auto p = make_quadratic(6, 5, 0.5, 0.4, 10.0, 23);
  const auto w = MixingMatrix::ring(5, 0.45);
  const auto scheme = CommScheme::i1(3, 2, 80);
  auto opts1 = options(0.04, 11);
  auto opts2 = options(0.04, 11);
  opts2.threads = 4;
  const RunTrace a = run(*p, w, scheme, opts1);
  const RunTrace b = run(*p, w, scheme, opts1);
  const RunTrace c = run(*p, w, scheme, opts2);
  REQUIRE(a.points.size() == b.points.size());
  REQUIRE(a.points.size() == c.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    CHECK(a.points[i].loss == b.points[i].loss);
    CHECK(a.points[i].grad_norm_sq == b.points[i].grad_norm_sq);
    CHECK(a.points[i].residual == b.points[i].residual);
    CHECK(a.points[i].loss == c.points[i].loss);
    CHECK(a.points[i].grad_norm_sq == c.points[i].grad_norm_sq);
    CHECK(a.points[i].residual == c.points[i].residual);
  }
  CHECK(a.mean_grad_norm_sq == c.mean_grad_norm_sq);
}

TEST_CASE("gossip contracts the residual at rate rho squared") {
  const auto p = make_quadratic(4, 6, 0.0, 0.0, 4.0, 29);
  const auto w = MixingMatrix::ring(6, 0.5);
  CounterRng rng(31, 0, 0);
  MatrixXd init(4, 6);
  for (int i = 0; i < init.size(); ++i) init.data()[i] = rng.normal();

  auto opts = options(0.0, 1);
  opts.initial_state = init;
  opts.log_gradients = true;
  const RunTrace trace = run(*p, w, CommScheme::i1(0, 1, 30), opts);
  const auto& states = trace.gradient_log->states;
  const double rate = w.rho() * w.rho();
  for (std::size_t t = 1; t < states.size(); ++t) {
    CHECK(residual(states[t]) <= rate * residual(states[t - 1]) * (1.0 + 1e-10) + 1e-300);
  }
}

TEST_CASE("divergence is detected and reported with its step") {
  const auto p = make_quadratic(3, 2, 0.0, 0.0, 1.0, 37);
  const auto w = MixingMatrix::complete(2);
  bool caught = false;
  try {
    run(*p, w, CommScheme::i1(0, 1, 2000), options(5.0, 1));
  } catch (const DivergenceError& e) {
    caught = true;
    CHECK(e.step() > 10);
    CHECK(e.step() <= 2000);
  }
  CHECK(caught);
}

TEST_CASE("trace rows appear at step one, multiples, and the horizon") {
  const auto p = make_quadratic(3, 2, 0.0, 0.1, 2.0, 41);
  const auto w = MixingMatrix::complete(2);
  const RunTrace trace = run(*p, w, CommScheme::i1(1, 1, 100), options(0.05, 1, Rule::after, 10));
  REQUIRE(trace.points.size() == 11);  // t = 1 plus the ten multiples of 10
  CHECK(trace.points.front().step == 1);
  CHECK(trace.points[1].step == 10);
  CHECK(trace.points.back().step == 100);
}

TEST_CASE("decomposition identity holds and the wrong rule breaks it") {
  const auto p = make_quadratic(4, 6, 1.0, 0.3, 5.0, 43);
  const auto w = MixingMatrix::ring(6, 0.5);
  const auto scheme = CommScheme::i1(3, 2, 50);
  for (const Rule rule : {Rule::after, Rule::before}) {
    auto opts = options(0.05, 7, rule);
    opts.log_gradients = true;
    const RunTrace trace = run(*p, w, scheme, opts);
    const DecompositionCheck check = verify_decomposition(trace, w, scheme, 0.05, rule);
    CHECK(check.max_rel <= 1e-9);
    // t = 1 deviates by exactly zero
    const DecompositionCheck first = verify_decomposition(trace, w, scheme, 0.05, rule, {1});
    CHECK(first.max_abs == 0.0);
    const Rule wrong = rule == Rule::after ? Rule::before : Rule::after;
    const DecompositionCheck bad = verify_decomposition(trace, w, scheme, 0.05, wrong);
    CHECK(bad.max_rel > 1e-3);
  }
}

TEST_CASE("decomposition check requires a gradient log") {
  const auto p = make_quadratic(3, 2, 0.0, 0.1, 2.0, 47);
  const auto w = MixingMatrix::complete(2);
  const auto scheme = CommScheme::i1(1, 1, 10);
  const RunTrace plain = run(*p, w, scheme, options(0.05, 1));
  CHECK_THROWS_AS(verify_decomposition(plain, w, scheme, 0.05, Rule::after), Error);

  auto capped = options(0.05, 1);
  capped.log_gradients = true;
  capped.log_cap_bytes = 64;  // far below one step of state
  const RunTrace trace = run(*p, w, scheme, capped);
  REQUIRE(trace.gradient_log);
  CHECK(trace.gradient_log->disabled_by_cap);
  CHECK_THROWS_AS(verify_decomposition(trace, w, scheme, 0.05, Rule::after), Error);
}

TEST_CASE("gradient-averaged estimate behaves like the theory") {
  const auto p = make_quadratic(8, 4, 0.0, 0.0, 6.0, 53);
  const auto w = MixingMatrix::complete(4);
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8};
  // noiseless gradient descent: longer horizons only shrink the average
  const auto short_run =
      estimate_mean_grad_norm(*p, w, CommScheme::i1(0, 1, 100), 0.1, seeds, Rule::after);
  const auto long_run =
      estimate_mean_grad_norm(*p, w, CommScheme::i1(0, 1, 400), 0.1, seeds, Rule::after);
  CHECK(long_run.mean < short_run.mean);
  CHECK(long_run.stderr_ == 0.0);  // deterministic, all seeds identical

  CHECK_THROWS_AS(
      estimate_mean_grad_norm(*p, w, CommScheme::i1(0, 1, 50), 0.1, {1, 2, 3}, Rule::after),
      Error);
}

TEST_CASE("disjoint seed sets agree within sampling error") {
  const auto p = make_quadratic(6, 4, 0.5, 0.3, 6.0, 59);
  const auto w = MixingMatrix::ring(4, 0.5);
  const auto scheme = CommScheme::i1(2, 2, 400);
  std::vector<std::uint64_t> first, second;
  for (std::uint64_t s = 0; s < 12; ++s) {
    first.push_back(100 + s);
    second.push_back(900 + s);
  }
  const auto a = estimate_mean_grad_norm(*p, w, scheme, 0.05, first, Rule::after);
  const auto b = estimate_mean_grad_norm(*p, w, scheme, 0.05, second, Rule::after);
  const double combined = std::sqrt(a.stderr_ * a.stderr_ + b.stderr_ * b.stderr_);
  CHECK(std::abs(a.mean - b.mean) <= 4.0 * combined);
}
