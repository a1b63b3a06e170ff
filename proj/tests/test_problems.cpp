#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "ldsgd/problems.hpp"
#include "ldsgd/rng.hpp"

using namespace ldsgd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("hand-built quadratic") {
  MatrixXd h(1, 1);
  h << 1.0;
  std::vector<VectorXd> offsets(2, VectorXd(1));
  offsets[0] << -1.0;
  offsets[1] << 1.0;
  const QuadraticProblem p(h, offsets, 0.0);
  CHECK(p.constants().noniid_kappa == doctest::Approx(1.0));
  CHECK(p.minimizer()[0] == doctest::Approx(0.0));
  CHECK(p.min_value() == doctest::Approx(0.0));
  CHECK(p.constants().init_error == doctest::Approx(0.0));
}

TEST_CASE("constructed constants are exact") {
  const auto p = make_quadratic(12, 6, 0.5, 0.3, 10.0, 42);
  CHECK(p->constants().noniid_kappa == 0.25);
  CHECK(p->constants().grad_variance == doctest::Approx(0.09).epsilon(1e-15));
  CHECK(p->constants().smoothness_l == 1.0);
  CHECK_FALSE(p->constants_estimated());

  // top eigenvalue of the realized Hessian agrees with the reported L
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(p->hessian(), Eigen::EigenvaluesOnly);
  CHECK(es.eigenvalues().maxCoeff() == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(es.eigenvalues().minCoeff() >= 1.0 / 10.0 - 1e-9);

  // heterogeneity is x-independent: empirical spread equals kappa^2 anywhere
  CounterRng rng(1, 0, 0);
  for (int trial = 0; trial < 100; ++trial) {
    VectorXd x(12);
    for (int i = 0; i < 12; ++i) x[i] = 2.0 * rng.normal();
    const VectorXd full = p->full_gradient(x);
    double dev = 0.0;
    for (int k = 0; k < 6; ++k) dev += (p->node_gradient(k, x) - full).squaredNorm();
    dev /= 6.0;
    CHECK(dev == doctest::Approx(0.25).epsilon(1e-12));
  }

  CHECK(make_quadratic(4, 3, 0.0, 0.1, 5.0, 7)->constants().noniid_kappa == 0.0);
  CHECK_THROWS_AS(make_quadratic(4, 1, 0.5, 0.1, 5.0, 7), Error);
}

TEST_CASE("quadratic minimizer and initial error") {
  const auto p = make_quadratic(8, 4, 0.7, 0.0, 5.0, 9);
  const VectorXd& xstar = p->minimizer();
  CHECK(p->full_gradient(xstar).norm() <= 1e-10);
  CHECK(p->objective(p->initial_point()) - p->min_value() ==
        doctest::Approx(p->constants().init_error));
  // min over a few random probes never beats the reported minimum
  CounterRng rng(2, 0, 0);
  for (int trial = 0; trial < 50; ++trial) {
    VectorXd x = xstar;
    for (int i = 0; i < 8; ++i) x[i] += 0.5 * rng.normal();
    CHECK(p->objective(x) >= p->min_value() - 1e-12);
  }
}

TEST_CASE("stochastic gradients are unbiased with exact noise power") {
  const auto p = make_quadratic(6, 3, 0.4, 0.25, 8.0, 11);
  CounterRng xr(3, 0, 0);
  VectorXd x(6);
  for (int i = 0; i < 6; ++i) x[i] = xr.normal();
  const int node = 1;
  const VectorXd exact = p->node_gradient(node, x);

  const int draws = 100000;
  VectorXd mean = VectorXd::Zero(6);
  double second = 0.0;
  VectorXd g(6);
  for (int s = 1; s <= draws; ++s) {
    p->stochastic_gradient(node, x, 77, s, g);
    mean += g;
    second += (g - exact).squaredNorm();
  }
  mean /= draws;
  second /= draws;

  const double sigma_sq = p->constants().grad_variance;
  // mean within 5 standard errors, componentwise scale sigma/sqrt(d*draws)
  const double se = std::sqrt(sigma_sq / 6.0 / draws);
  CHECK((mean - exact).cwiseAbs().maxCoeff() <= 5.0 * se);
  CHECK(second <= sigma_sq * 1.01);
  CHECK(second >= sigma_sq * 0.97);
}

TEST_CASE("identical seeds reproduce identical noise") {
  const auto p = make_quadratic(5, 2, 0.1, 0.5, 3.0, 21);
  VectorXd x = VectorXd::Ones(5);
  VectorXd a(5), b(5), c(5);
  p->stochastic_gradient(0, x, 9, 4, a);
  p->stochastic_gradient(0, x, 9, 4, b);
  p->stochastic_gradient(0, x, 9, 5, c);
  CHECK((a.array() == b.array()).all());
  CHECK_FALSE((a.array() == c.array()).all());
}

TEST_CASE("logistic gradient matches finite differences") {
  const auto p = make_logistic(6, 3, 20, 0.4, 5);
  CHECK(p->constants_estimated());
  CounterRng rng(4, 0, 0);
  for (int trial = 0; trial < 10; ++trial) {
    VectorXd x(6);
    for (int i = 0; i < 6; ++i) x[i] = 0.7 * rng.normal();
    const int node = static_cast<int>(rng.below(3));
    const int idx = static_cast<int>(rng.below(20));
    const VectorXd g = p->sample_gradient(node, idx, x);
    for (int i = 0; i < 6; ++i) {
      VectorXd hi = x, lo = x;
      hi[i] += 1e-6;
      lo[i] -= 1e-6;
      const double fd = (p->sample_loss(node, idx, hi) - p->sample_loss(node, idx, lo)) / 2e-6;
      CHECK(g[i] == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}

TEST_CASE("logistic smoothness estimate holds along random segments") {
  const auto p = make_logistic(5, 2, 30, 0.0, 8);
  const double lhat = p->constants().smoothness_l;
  CounterRng rng(6, 0, 0);
  for (int trial = 0; trial < 100; ++trial) {
    VectorXd x(5), y(5);
    for (int i = 0; i < 5; ++i) {
      x[i] = rng.normal();
      y[i] = rng.normal();
    }
    const int node = static_cast<int>(rng.below(2));
    const double lhs = (p->node_gradient(node, x) - p->node_gradient(node, y)).norm();
    CHECK(lhs <= lhat * (x - y).norm() * (1.0 + 1e-6));
  }
}

TEST_CASE("logistic skew controls per-node class balance") {
  const auto iid = make_logistic(4, 4, 100, 0.0, 3);
  CHECK_FALSE(iid->has_single_class_node());
  CHECK(iid->constants().noniid_kappa >= 0.0);  // reported, threshold-free

  const auto skewed = make_logistic(4, 4, 100, 1.0, 3);
  CHECK(skewed->has_single_class_node());
  CHECK(skewed->constants().noniid_kappa > iid->constants().noniid_kappa);
  CHECK_FALSE(skewed->probe_description().empty());

  CHECK_THROWS_AS(make_logistic(4, 4, 9, 0.0, 3), Error);
}

TEST_CASE("logistic variance estimate covers its probe grid") {
  const auto p = make_logistic(5, 3, 25, 0.5, 12);
  const double sigma_sq = p->constants().grad_variance;
  // at the origin (a probe point) the per-sample spread is within the bound
  const VectorXd x = VectorXd::Zero(5);
  for (int k = 0; k < 3; ++k) {
    const VectorXd nk = p->node_gradient(k, x);
    double var = 0.0;
    for (int i = 0; i < 25; ++i) var += (p->sample_gradient(k, i, x) - nk).squaredNorm();
    var /= 25.0;
    CHECK(var <= sigma_sq * (1.0 + 1e-2));
  }
}

TEST_CASE("stochastic logistic draws are unbiased over the shard") {
  const auto p = make_logistic(4, 2, 16, 0.3, 9);
  VectorXd x = VectorXd::Constant(4, 0.2);
  const VectorXd exact = p->node_gradient(0, x);
  VectorXd mean = VectorXd::Zero(4);
  VectorXd g(4);
  double second = 0.0;
  const int draws = 100000;
  for (int s = 1; s <= draws; ++s) {
    p->stochastic_gradient(0, x, 31, s, g);
    mean += g;
    second += (g - exact).squaredNorm();
  }
  mean /= draws;
  const double se = std::sqrt(second / draws / draws);
  CHECK((mean - exact).norm() <= 5.0 * se);
}
