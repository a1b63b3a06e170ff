#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ldsgd/bounds.hpp"
#include "ldsgd/errors.hpp"

namespace ldsgd {

// A synthetic distributed optimization problem: per-node objectives
// f_k with a shared global objective f = (1/n) sum_k f_k, exact full and
// per-node gradient oracles, and a stochastic gradient oracle driven by
// counter-based noise streams keyed on (seed, node, step).
class Problem {
 public:
  virtual ~Problem() = default;

  int dim() const { return dim_; }
  int nodes() const { return nodes_; }
  const ProblemConstants& constants() const { return consts_; }
  // true when the constants are empirical estimates rather than
  // construction-exact values
  bool constants_estimated() const { return estimated_; }

  Eigen::VectorXd initial_point() const { return Eigen::VectorXd::Zero(dim_); }

  virtual double objective(const Eigen::Ref<const Eigen::VectorXd>& x) const = 0;
  virtual Eigen::VectorXd full_gradient(const Eigen::Ref<const Eigen::VectorXd>& x) const = 0;
  virtual Eigen::VectorXd node_gradient(int node,
                                        const Eigen::Ref<const Eigen::VectorXd>& x) const = 0;
  virtual void stochastic_gradient(int node, const Eigen::Ref<const Eigen::VectorXd>& x,
                                   std::uint64_t seed, std::int64_t step,
                                   Eigen::Ref<Eigen::VectorXd> out) const = 0;

 protected:
  Problem(int dim, int nodes) : dim_(dim), nodes_(nodes) {}

  int dim_;
  int nodes_;
  ProblemConstants consts_;
  bool estimated_ = false;
};

// f_k(x) = (1/2) x'Hx - b_k'x with a shared positive definite Hessian.
// Heterogeneity is x-independent (grad f_k - grad f = mean(b) - b_k), so
// kappa^2 = (1/n) sum_k |b_k - mean(b)|^2 holds with equality at every x.
// Stochastic gradients add isotropic Gaussian noise with total variance
// sigma^2 exactly.
class QuadraticProblem final : public Problem {
 public:
  QuadraticProblem(Eigen::MatrixXd hessian, std::vector<Eigen::VectorXd> offsets, double sigma);

  double objective(const Eigen::Ref<const Eigen::VectorXd>& x) const override;
  Eigen::VectorXd full_gradient(const Eigen::Ref<const Eigen::VectorXd>& x) const override;
  Eigen::VectorXd node_gradient(int node,
                                const Eigen::Ref<const Eigen::VectorXd>& x) const override;
  void stochastic_gradient(int node, const Eigen::Ref<const Eigen::VectorXd>& x,
                           std::uint64_t seed, std::int64_t step,
                           Eigen::Ref<Eigen::VectorXd> out) const override;

  const Eigen::MatrixXd& hessian() const { return hessian_; }
  const std::vector<Eigen::VectorXd>& offsets() const { return offsets_; }
  const Eigen::VectorXd& mean_offset() const { return mean_offset_; }
  const Eigen::VectorXd& minimizer() const { return minimizer_; }
  double min_value() const { return min_value_; }
  double sigma() const { return sigma_; }

 private:
  friend std::shared_ptr<QuadraticProblem> make_quadratic(int, int, double, double, double,
                                                          std::uint64_t);

  Eigen::MatrixXd hessian_;
  std::vector<Eigen::VectorXd> offsets_;
  Eigen::VectorXd mean_offset_;
  Eigen::VectorXd minimizer_;
  double min_value_;
  double sigma_;
  double noise_scale_;  // sigma / sqrt(d), per-component standard deviation
};

// Random instance: Hessian with spectrum log-uniform in [1/cond, 1] and top
// eigenvalue exactly 1; offsets recentred and rescaled so that kappa^2 hits
// kappa_target^2 exactly.
std::shared_ptr<QuadraticProblem> make_quadratic(int dim, int nodes, double kappa_target,
                                                 double sigma, double cond, std::uint64_t seed);

// Binary logistic regression with L2 regularization 1e-3 on data planted
// from a linear model; label_skew in [0,1] controls per-node class
// imbalance (1 = single-class shards). Constants are empirical estimates.
class LogisticProblem final : public Problem {
 public:
  LogisticProblem(int dim, int nodes, int samples_per_node, double label_skew,
                  std::uint64_t seed);

  double objective(const Eigen::Ref<const Eigen::VectorXd>& x) const override;
  Eigen::VectorXd full_gradient(const Eigen::Ref<const Eigen::VectorXd>& x) const override;
  Eigen::VectorXd node_gradient(int node,
                                const Eigen::Ref<const Eigen::VectorXd>& x) const override;
  void stochastic_gradient(int node, const Eigen::Ref<const Eigen::VectorXd>& x,
                           std::uint64_t seed, std::int64_t step,
                           Eigen::Ref<Eigen::VectorXd> out) const override;

  int samples_per_node() const { return samples_; }
  double regularization() const { return reg_; }
  bool has_single_class_node() const { return single_class_node_; }
  const std::string& probe_description() const { return probe_description_; }

  // single-sample loss/gradient, for finite-difference checks
  double sample_loss(int node, int idx, const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::VectorXd sample_gradient(int node, int idx,
                                  const Eigen::Ref<const Eigen::VectorXd>& x) const;

 private:
  int samples_;
  double reg_;
  bool single_class_node_ = false;
  std::vector<Eigen::MatrixXd> features_;   // per node, d x m
  std::vector<Eigen::VectorXd> labels_;     // per node, +-1
  std::string probe_description_;
};

std::shared_ptr<LogisticProblem> make_logistic(int dim, int nodes, int samples_per_node,
                                               double label_skew, std::uint64_t seed);

// The problem's constants (exact for quadratics, estimates for logistic;
// see Problem::constants_estimated).
inline ProblemConstants exact_constants(const Problem& problem) { return problem.constants(); }

}  // namespace ldsgd
