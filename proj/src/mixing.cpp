#include "ldsgd/mixing.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ldsgd/rng.hpp"

namespace ldsgd {

namespace {

double second_largest_abs_eigenvalue(const Eigen::MatrixXd& w) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(w, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    fail(Errc::construction_failed, "eigendecomposition did not converge");
  }
  const auto& ev = es.eigenvalues();  // ascending
  const Eigen::Index n = ev.size();
  // top eigenvalue is 1 for a doubly stochastic matrix; the runner-up in
  // absolute value is either the second largest or the most negative
  return std::max(std::abs(ev[0]), std::abs(ev[n - 2]));
}

void validate_doubly_stochastic(const Eigen::MatrixXd& w) {
  const Eigen::Index n = w.rows();
  if (n < 2 || w.cols() != n) {
    fail(Errc::invalid_matrix, "mixing matrix must be square with at least two nodes");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double v = w(i, j);
      if (!std::isfinite(v) || v < 0.0) {
        fail(Errc::invalid_matrix, "mixing weights must be finite and nonnegative");
      }
      if (w(i, j) != w(j, i)) {
        fail(Errc::invalid_matrix, "mixing matrix must be exactly symmetric");
      }
      row_sum += v;
    }
    if (std::abs(row_sum - 1.0) > kRowSumTol) {
      fail(Errc::invalid_matrix,
           "row " + std::to_string(i) + " sums to " + std::to_string(row_sum) +
               ", outside the 1e-12 stochasticity tolerance");
    }
  }
}

// Stub-matching sampler for a simple d-regular graph; returns adjacency
// lists or empty on a wedged attempt.
std::vector<std::vector<int>> sample_regular_graph(int n, int degree, CounterRng& rng) {
  const int stubs_total = n * degree;
  std::vector<int> stub_owner(stubs_total);
  for (int i = 0; i < n; ++i) {
    std::fill(stub_owner.begin() + i * degree, stub_owner.begin() + (i + 1) * degree, i);
  }
  std::vector<char> edge_taken(static_cast<std::size_t>(n) * n, 0);
  std::vector<std::vector<int>> adj(n);
  int remaining = stubs_total;
  long draws_left = 64L * stubs_total + 4096;
  while (remaining > 0) {
    if (draws_left-- <= 0) return {};
    const int a = static_cast<int>(rng.below(static_cast<std::uint64_t>(remaining)));
    const int b = static_cast<int>(rng.below(static_cast<std::uint64_t>(remaining)));
    if (a == b) continue;
    const int u = stub_owner[a];
    const int v = stub_owner[b];
    if (u == v || edge_taken[static_cast<std::size_t>(u) * n + v]) continue;
    edge_taken[static_cast<std::size_t>(u) * n + v] = 1;
    edge_taken[static_cast<std::size_t>(v) * n + u] = 1;
    adj[u].push_back(v);
    adj[v].push_back(u);
    // swap consumed stubs to the tail
    const int hi = std::max(a, b);
    const int lo = std::min(a, b);
    std::swap(stub_owner[hi], stub_owner[remaining - 1]);
    std::swap(stub_owner[lo], stub_owner[remaining - 2]);
    remaining -= 2;
  }
  return adj;
}

bool is_connected(const std::vector<std::vector<int>>& adj) {
  const int n = static_cast<int>(adj.size());
  std::vector<char> seen(n, 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int visited = 1;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (int v : adj[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++visited;
        stack.push_back(v);
      }
    }
  }
  return visited == n;
}

}  // namespace

double spectral_rho(const Eigen::MatrixXd& weights) {
  validate_doubly_stochastic(weights);
  return second_largest_abs_eigenvalue(weights);
}

MixingMatrix MixingMatrix::from_weights(Eigen::MatrixXd weights) {
  validate_doubly_stochastic(weights);
  const double rho = second_largest_abs_eigenvalue(weights);
  if (!(rho < 1.0 - 1e-10)) {
    fail(Errc::invalid_matrix,
         "spectral gap is closed (rho = " + std::to_string(rho) + "); graph disconnected?");
  }
  return MixingMatrix(std::move(weights), rho);
}

MixingMatrix MixingMatrix::unchecked(Eigen::MatrixXd weights, double rho) {
  return MixingMatrix(std::move(weights), rho);
}

MixingMatrix MixingMatrix::complete(int n) {
  if (n < 2) fail(Errc::invalid_topology, "complete graph needs at least 2 nodes");
  Eigen::MatrixXd w = Eigen::MatrixXd::Constant(n, n, 1.0 / n);
  return from_weights(std::move(w));
}

MixingMatrix MixingMatrix::ring(int n, double self_weight) {
  if (n < 3) fail(Errc::invalid_topology, "ring needs at least 3 nodes");
  if (!(self_weight > 0.0 && self_weight < 1.0)) {
    fail(Errc::invalid_topology, "ring self weight must lie in (0,1)");
  }
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  const double side = (1.0 - self_weight) / 2.0;
  for (int i = 0; i < n; ++i) {
    w(i, i) = self_weight;
    const int r = (i + 1) % n;
    w(i, r) += side;
    w(r, i) += side;
  }
  return from_weights(std::move(w));
}

MixingMatrix MixingMatrix::random_regular(int n, int degree, std::uint64_t seed) {
  if (n < 2) fail(Errc::invalid_topology, "regular graph needs at least 2 nodes");
  if (degree < 1 || degree >= n) {
    fail(Errc::invalid_topology, "degree must satisfy 1 <= degree < n");
  }
  if ((static_cast<long long>(n) * degree) % 2 != 0) {
    fail(Errc::invalid_topology, "n * degree must be even");
  }

  for (int attempt = 0; attempt < 16; ++attempt) {
    std::vector<std::vector<int>> adj;
    if (degree == n - 1) {
      adj.resize(n);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          if (j != i) adj[i].push_back(j);
        }
      }
    } else {
      for (int restart = 0; restart < 256 && adj.empty(); ++restart) {
        CounterRng rng(seed + attempt, 0x726567756c6172ULL, restart);
        adj = sample_regular_graph(n, degree, rng);
      }
      if (adj.empty()) continue;
    }
    if (!is_connected(adj)) continue;

    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
    const double off = 1.0 / (degree + 1);  // Metropolis weight, all degrees equal
    for (int i = 0; i < n; ++i) {
      for (int j : adj[i]) {
        if (j > i) {
          w(i, j) = off;
          w(j, i) = off;
        }
      }
    }
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += w(i, j);
      w(i, i) = 1.0 - s;
    }
    const double rho = second_largest_abs_eigenvalue(w);
    if (rho < 1.0 - 1e-10) return MixingMatrix(std::move(w), rho);
  }
  fail(Errc::construction_failed,
       "no connected regular graph found after 16 reseeded attempts");
}

}  // namespace ldsgd
