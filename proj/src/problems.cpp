#include "ldsgd/problems.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>

#include "ldsgd/rng.hpp"

namespace ldsgd {

namespace {

// stream tags so the construction draws never collide with run-time noise
enum : std::uint64_t {
  kTagHessian = 0x4865737369616eULL,
  kTagOffsets = 0x4f666673657473ULL,
  kTagData = 0x44617461ULL,
  kTagProbes = 0x50726f626573ULL,
};

double log1p_exp(double u) {
  if (u > 0.0) return u + std::log1p(std::exp(-u));
  return std::log1p(std::exp(u));
}

double sigmoid(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

}  // namespace

QuadraticProblem::QuadraticProblem(Eigen::MatrixXd hessian, std::vector<Eigen::VectorXd> offsets,
                                   double sigma)
    : Problem(static_cast<int>(hessian.rows()), static_cast<int>(offsets.size())),
      hessian_(std::move(hessian)),
      offsets_(std::move(offsets)),
      sigma_(sigma) {
  const int d = dim_;
  if (d < 1 || hessian_.cols() != d) fail(Errc::invalid_argument, "Hessian must be square");
  if (nodes_ < 1) fail(Errc::invalid_argument, "need at least one node");
  if (sigma < 0.0 || !std::isfinite(sigma)) fail(Errc::invalid_argument, "sigma must be >= 0");
  hessian_ = ((hessian_ + hessian_.transpose()) / 2.0).eval();
  for (const auto& b : offsets_) {
    if (b.size() != d) fail(Errc::invalid_argument, "offset dimension mismatch");
  }

  mean_offset_ = Eigen::VectorXd::Zero(d);
  for (const auto& b : offsets_) mean_offset_ += b;
  mean_offset_ /= static_cast<double>(nodes_);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hessian_, Eigen::EigenvaluesOnly);
  const double lmax = es.eigenvalues().maxCoeff();
  const double lmin = es.eigenvalues().minCoeff();
  if (!(lmax > 0.0)) fail(Errc::invalid_constants, "Hessian must have a positive top eigenvalue");
  if (lmin < -1e-10 * lmax) {
    fail(Errc::invalid_constants, "Hessian must be positive semi-definite");
  }

  minimizer_ = hessian_.ldlt().solve(mean_offset_);
  if ((hessian_ * minimizer_ - mean_offset_).norm() >
      1e-8 * std::max(1.0, mean_offset_.norm())) {
    fail(Errc::invalid_constants, "objective has no finite minimizer");
  }
  min_value_ = 0.5 * minimizer_.dot(hessian_ * minimizer_) - mean_offset_.dot(minimizer_);

  double kappa_sq = 0.0;
  for (const auto& b : offsets_) kappa_sq += (b - mean_offset_).squaredNorm();
  kappa_sq /= static_cast<double>(nodes_);

  noise_scale_ = sigma_ / std::sqrt(static_cast<double>(d));
  consts_.smoothness_l = lmax;
  consts_.grad_variance = sigma_ * sigma_;
  consts_.noniid_kappa = kappa_sq;
  consts_.init_error = objective(initial_point()) - min_value_;
  consts_.nodes = nodes_;
}

double QuadraticProblem::objective(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return 0.5 * x.dot(hessian_ * x) - mean_offset_.dot(x);
}

Eigen::VectorXd QuadraticProblem::full_gradient(
    const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return hessian_ * x - mean_offset_;
}

Eigen::VectorXd QuadraticProblem::node_gradient(
    int node, const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return hessian_ * x - offsets_[node];
}

void QuadraticProblem::stochastic_gradient(int node, const Eigen::Ref<const Eigen::VectorXd>& x,
                                           std::uint64_t seed, std::int64_t step,
                                           Eigen::Ref<Eigen::VectorXd> out) const {
  out = hessian_ * x - offsets_[node];
  if (sigma_ > 0.0) {
    CounterRng rng(seed, static_cast<std::uint64_t>(node), static_cast<std::uint64_t>(step));
    for (int i = 0; i < dim_; ++i) out[i] += noise_scale_ * rng.normal();
  }
}

std::shared_ptr<QuadraticProblem> make_quadratic(int dim, int nodes, double kappa_target,
                                                 double sigma, double cond, std::uint64_t seed) {
  if (dim < 1) fail(Errc::invalid_argument, "dimension must be positive");
  if (nodes < 1) fail(Errc::invalid_argument, "need at least one node");
  if (kappa_target < 0.0 || sigma < 0.0) {
    fail(Errc::invalid_argument, "kappa and sigma must be nonnegative");
  }
  if (cond < 1.0) fail(Errc::invalid_argument, "condition number must be >= 1");
  if (kappa_target > 0.0 && nodes < 2) {
    fail(Errc::infeasible, "heterogeneity needs at least two nodes");
  }

  CounterRng hrng(seed, kTagHessian, 0);
  Eigen::VectorXd eigs(dim);
  eigs[0] = 1.0;
  const double log_lo = std::log(1.0 / cond);
  for (int i = 1; i < dim; ++i) eigs[i] = std::exp(log_lo * hrng.uniform01());
  Eigen::MatrixXd gauss(dim, dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) gauss(i, j) = hrng.normal();
  }
  Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(gauss).householderQ();
  Eigen::MatrixXd h = q * eigs.asDiagonal() * q.transpose();
  h = ((h + h.transpose()) / 2.0).eval();

  CounterRng brng(seed, kTagOffsets, 0);
  const double comp_std = 1.0 / std::sqrt(static_cast<double>(dim));
  Eigen::VectorXd mean(dim);
  for (int i = 0; i < dim; ++i) mean[i] = comp_std * brng.normal();
  std::vector<Eigen::VectorXd> raw(nodes, Eigen::VectorXd::Zero(dim));
  Eigen::VectorXd raw_mean = Eigen::VectorXd::Zero(dim);
  for (int k = 0; k < nodes; ++k) {
    for (int i = 0; i < dim; ++i) raw[k][i] = comp_std * brng.normal();
    raw_mean += raw[k];
  }
  raw_mean /= static_cast<double>(nodes);

  std::vector<Eigen::VectorXd> offsets(nodes);
  double spread = 0.0;
  for (int k = 0; k < nodes; ++k) {
    raw[k] -= raw_mean;
    spread += raw[k].squaredNorm();
  }
  spread /= static_cast<double>(nodes);
  double scale = 0.0;
  if (kappa_target > 0.0) {
    if (!(spread > 0.0)) fail(Errc::construction_failed, "degenerate offset sample");
    scale = kappa_target / std::sqrt(spread);
  }
  for (int k = 0; k < nodes; ++k) offsets[k] = mean + scale * raw[k];

  auto problem = std::make_shared<QuadraticProblem>(std::move(h), std::move(offsets), sigma);
  // the spectrum and the offset spread were constructed to hit these exactly
  problem->consts_.smoothness_l = 1.0;
  problem->consts_.noniid_kappa = kappa_target * kappa_target;
  problem->consts_.grad_variance = sigma * sigma;
  return problem;
}

LogisticProblem::LogisticProblem(int dim, int nodes, int samples_per_node, double label_skew,
                                 std::uint64_t seed)
    : Problem(dim, nodes), samples_(samples_per_node), reg_(1e-3) {
  if (dim < 1) fail(Errc::invalid_argument, "dimension must be positive");
  if (nodes < 1) fail(Errc::invalid_argument, "need at least one node");
  if (samples_per_node < 10) {
    fail(Errc::invalid_argument, "logistic testbed needs at least 10 samples per node");
  }
  if (!(label_skew >= 0.0 && label_skew <= 1.0)) {
    fail(Errc::invalid_argument, "label skew must lie in [0, 1]");
  }

  // planted model: class-conditional Gaussian blobs around two independent
  // centers. Antipodal (or any symmetric) centers would make the margin
  // variable y*z class-independent and label skew a no-op in gradient space,
  // so the centers are drawn separately.
  CounterRng wrng(seed, kTagData, 0);
  auto draw_unit = [&](Eigen::VectorXd& v) {
    v.resize(dim);
    for (int i = 0; i < dim; ++i) v[i] = wrng.normal();
    if (v.norm() < 1e-12) v[0] = 1.0;
    v /= v.norm();
  };
  Eigen::VectorXd center_pos, center_neg;
  draw_unit(center_pos);
  draw_unit(center_neg);

  features_.resize(nodes);
  labels_.resize(nodes);
  for (int k = 0; k < nodes; ++k) {
    const double sign = (k % 2 == 0) ? 1.0 : -1.0;
    const int want_pos =
        std::clamp(static_cast<int>(std::lround((0.5 + 0.5 * label_skew * sign) * samples_)), 0,
                   samples_);
    if (want_pos == 0 || want_pos == samples_) single_class_node_ = true;
    features_[k].resize(dim, samples_);
    labels_[k].resize(samples_);
    CounterRng rng(seed, kTagData, static_cast<std::uint64_t>(k) + 1);
    for (int i = 0; i < samples_; ++i) {
      const double y = i < want_pos ? 1.0 : -1.0;
      const Eigen::VectorXd& center = y > 0.0 ? center_pos : center_neg;
      labels_[k][i] = y;
      for (int j = 0; j < dim; ++j) features_[k](j, i) = center[j] + rng.normal();
    }
  }
  Eigen::VectorXd planted = center_pos - center_neg;  // discriminative direction
  if (planted.norm() < 1e-12) planted[0] = 1.0;
  planted /= planted.norm();

  // smoothness: per-node logistic Hessian is bounded by Z Z' / (4m) + reg I
  double lhat = 0.0;
  for (int k = 0; k < nodes; ++k) {
    Eigen::MatrixXd gram = features_[k] * features_[k].transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
    lhat = std::max(lhat, es.eigenvalues().maxCoeff() / (4.0 * samples_));
  }
  lhat += reg_;

  // empirical sigma^2 / kappa^2 maxima over a fixed probe grid
  const double comp_std = 1.0 / std::sqrt(static_cast<double>(dim));
  std::vector<Eigen::VectorXd> probes;
  probes.push_back(Eigen::VectorXd::Zero(dim));
  probes.push_back(planted);
  probes.push_back(-planted);
  probes.push_back(2.0 * planted);
  CounterRng prng(seed, kTagProbes, 0);
  for (int p = 0; p < 8; ++p) {
    Eigen::VectorXd x(dim);
    for (int i = 0; i < dim; ++i) x[i] = 2.0 * comp_std * prng.normal();
    probes.push_back(x);
  }
  probe_description_ =
      "probe grid: origin, +/- and 2x the planted discriminative direction, and 8 "
      "seed-derived N(0, (2/sqrt(d))^2 I) points";

  double sigma_sq = 0.0;
  double kappa_sq = 0.0;
  for (const auto& x : probes) {
    Eigen::VectorXd full = full_gradient(x);
    for (int k = 0; k < nodes; ++k) {
      Eigen::VectorXd nk = node_gradient(k, x);
      double var = 0.0;
      for (int i = 0; i < samples_; ++i) {
        var += (sample_gradient(k, i, x) - nk).squaredNorm();
      }
      sigma_sq = std::max(sigma_sq, var / samples_);
    }
    double dev = 0.0;
    for (int k = 0; k < nodes; ++k) dev += (node_gradient(k, x) - full).squaredNorm();
    kappa_sq = std::max(kappa_sq, dev / nodes);
  }

  // damped Newton to locate the minimum for the initial-error estimate
  Eigen::VectorXd x = Eigen::VectorXd::Zero(dim);
  double fx = objective(x);
  for (int it = 0; it < 60; ++it) {
    Eigen::VectorXd g = full_gradient(x);
    if (g.norm() < 1e-13) break;
    Eigen::MatrixXd hess = reg_ * Eigen::MatrixXd::Identity(dim, dim);
    for (int k = 0; k < nodes; ++k) {
      for (int i = 0; i < samples_; ++i) {
        const double margin = labels_[k][i] * features_[k].col(i).dot(x);
        const double p = sigmoid(-margin);
        hess += (p * (1.0 - p) / (nodes * static_cast<double>(samples_))) *
                features_[k].col(i) * features_[k].col(i).transpose();
      }
    }
    Eigen::VectorXd step = hess.ldlt().solve(g);
    double t = 1.0;
    for (int h = 0; h < 40; ++h) {
      const double fn = objective(x - t * step);
      if (fn <= fx) {
        x -= t * step;
        fx = fn;
        break;
      }
      t /= 2.0;
    }
  }

  consts_.smoothness_l = lhat;
  consts_.grad_variance = sigma_sq;
  consts_.noniid_kappa = kappa_sq;
  consts_.init_error = objective(initial_point()) - fx;
  consts_.nodes = nodes;
  estimated_ = true;
}

double LogisticProblem::sample_loss(int node, int idx,
                                    const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const double margin = labels_[node][idx] * features_[node].col(idx).dot(x);
  return log1p_exp(-margin) + 0.5 * reg_ * x.squaredNorm();
}

Eigen::VectorXd LogisticProblem::sample_gradient(
    int node, int idx, const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const double y = labels_[node][idx];
  const double margin = y * features_[node].col(idx).dot(x);
  return (-y * sigmoid(-margin)) * features_[node].col(idx) + reg_ * x;
}

double LogisticProblem::objective(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  double acc = 0.0;
  for (int k = 0; k < nodes_; ++k) {
    for (int i = 0; i < samples_; ++i) {
      const double margin = labels_[k][i] * features_[k].col(i).dot(x);
      acc += log1p_exp(-margin);
    }
  }
  return acc / (static_cast<double>(nodes_) * samples_) + 0.5 * reg_ * x.squaredNorm();
}

Eigen::VectorXd LogisticProblem::full_gradient(
    const Eigen::Ref<const Eigen::VectorXd>& x) const {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(dim_);
  for (int k = 0; k < nodes_; ++k) g += node_gradient(k, x);
  return g / static_cast<double>(nodes_);
}

Eigen::VectorXd LogisticProblem::node_gradient(
    int node, const Eigen::Ref<const Eigen::VectorXd>& x) const {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(dim_);
  for (int i = 0; i < samples_; ++i) {
    const double y = labels_[node][i];
    const double margin = y * features_[node].col(i).dot(x);
    g += (-y * sigmoid(-margin)) * features_[node].col(i);
  }
  return g / static_cast<double>(samples_) + reg_ * x;
}

void LogisticProblem::stochastic_gradient(int node, const Eigen::Ref<const Eigen::VectorXd>& x,
                                          std::uint64_t seed, std::int64_t step,
                                          Eigen::Ref<Eigen::VectorXd> out) const {
  CounterRng rng(seed, static_cast<std::uint64_t>(node), static_cast<std::uint64_t>(step));
  const int idx = static_cast<int>(rng.below(static_cast<std::uint64_t>(samples_)));
  out = sample_gradient(node, idx, x);
}

std::shared_ptr<LogisticProblem> make_logistic(int dim, int nodes, int samples_per_node,
                                               double label_skew, std::uint64_t seed) {
  return std::make_shared<LogisticProblem>(dim, nodes, samples_per_node, label_skew, seed);
}

}  // namespace ldsgd
