#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "ldsgd/errors.hpp"

namespace ldsgd {

// per-row absolute tolerance for double stochasticity
inline constexpr double kRowSumTol = 1e-12;

// Symmetric doubly stochastic gossip matrix together with its contraction
// factor rho = |lambda_2| (second largest absolute eigenvalue), cached at
// construction. Immutable; safe to share across threads.
class MixingMatrix {
 public:
  // all-to-all averaging, every entry 1/n
  static MixingMatrix complete(int n);

  // cycle with `self_weight` on the diagonal and the remaining mass split
  // equally between the two ring neighbors
  static MixingMatrix ring(int n, double self_weight);

  // random d-regular graph with Metropolis-Hastings weights
  // w_ij = 1/(max(deg_i, deg_j) + 1); disconnected samples are re-drawn with
  // a bounded number of reseeds before failing
  static MixingMatrix random_regular(int n, int degree, std::uint64_t seed);

  // validates an explicit matrix (exact symmetry, nonnegative entries, row
  // sums within kRowSumTol) and requires an open spectral gap
  static MixingMatrix from_weights(Eigen::MatrixXd weights);

  // skips the spectral-gap requirement; for degenerate-case experiments
  static MixingMatrix unchecked(Eigen::MatrixXd weights, double rho);

  int nodes() const { return static_cast<int>(weights_.rows()); }
  const Eigen::MatrixXd& weights() const { return weights_; }
  double rho() const { return rho_; }

 private:
  MixingMatrix(Eigen::MatrixXd w, double rho) : weights_(std::move(w)), rho_(rho) {}

  Eigen::MatrixXd weights_;
  double rho_;
};

// Second largest absolute eigenvalue of a symmetric doubly stochastic
// matrix. Validates the matrix first; does not require a spectral gap
// (the identity matrix yields 1).
double spectral_rho(const Eigen::MatrixXd& weights);

}  // namespace ldsgd
