#pragma once

// Heat-kernel affinity graphs and their blended Laplacian.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "stnc/error.hpp"

namespace stnc::graph {

// A heat-kernel bandwidth: either a fixed value or "auto", the mean squared
// distance over all ordered pairs i != j.
struct Bandwidth {
  std::optional<double> value;

  static Bandwidth automatic() { return {}; }
  static Bandwidth fixed(double v) { return {v}; }
  bool is_auto() const { return !value.has_value(); }
};

struct HeatKernel {
  Eigen::MatrixXd weights;  // N x N
  double delta = 0.0;       // bandwidth actually used
};

inline Eigen::MatrixXd pairwise_sq_distances(const Eigen::MatrixXd& x) {
  const Eigen::Index n = x.cols();
  Eigen::MatrixXd d2 = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double d = (x.col(i) - x.col(j)).squaredNorm();
      d2(i, j) = d;
      d2(j, i) = d;
    }
  return d2;
}

inline double auto_bandwidth(const Eigen::MatrixXd& d2) {
  const Eigen::Index n = d2.rows();
  require(n >= 2, ErrorKind::kInput, "at least two vectors are needed for an automatic bandwidth");
  const double mean = d2.sum() / static_cast<double>(n * (n - 1));
  require(mean > 0.0, ErrorKind::kBandwidth, "all vectors identical; automatic bandwidth is undefined");
  return mean;
}

/// Keeps W_ij only when j is among the k nearest neighbours of i or i among
/// those of j (union rule). Self-affinities stay at their original value.
inline void sparsify_knn(Eigen::MatrixXd& w, const Eigen::MatrixXd& d2, Eigen::Index knn) {
  const Eigen::Index n = w.rows();
  require(knn >= 1, ErrorKind::kParameter, "knn must be >= 1");
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> keep =
      Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(n, n, false);
  std::vector<std::pair<double, Eigen::Index>> row(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    keep(i, i) = true;
    std::size_t m = 0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) row[m++] = {d2(i, j), j};
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(knn), m);
    std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k),
                      row.begin() + static_cast<std::ptrdiff_t>(m));
    for (std::size_t r = 0; r < k; ++r) {
      keep(i, row[r].second) = true;
      keep(row[r].second, i) = true;
    }
  }
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i)
      if (!keep(i, j)) w(i, j) = 0.0;
}

/// W_ij = exp(-|x_j - x_i|^2 / delta) over the columns of `x`.
inline HeatKernel heat_kernel_matrix(const Eigen::MatrixXd& x, Bandwidth bandwidth = {},
                                     std::optional<Eigen::Index> knn = std::nullopt) {
  require(x.cols() >= 2, ErrorKind::kInput, "heat kernel needs at least two vectors");
  require(x.allFinite(), ErrorKind::kInput, "non-finite vector in heat kernel input");
  if (!bandwidth.is_auto())
    require(*bandwidth.value > 0.0 && std::isfinite(*bandwidth.value), ErrorKind::kParameter,
            "heat kernel bandwidth must be positive");
  const Eigen::MatrixXd d2 = pairwise_sq_distances(x);
  HeatKernel hk;
  hk.delta = bandwidth.is_auto() ? auto_bandwidth(d2) : *bandwidth.value;
  hk.weights = (-d2.array() / hk.delta).exp().matrix();
  if (knn) sparsify_knn(hk.weights, d2, *knn);
  return hk;
}

struct AffinityGraph {
  Eigen::MatrixXd feature_weights;       // W^F
  Eigen::MatrixXd distribution_weights;  // W^D
  double beta = 1.0;
  Eigen::MatrixXd weights;  // W = beta W^F + (1 - beta) W^D
  Eigen::VectorXd degree;   // D_ii = sum_j W_ij
  Eigen::MatrixXd laplacian;

  Eigen::Index size() const { return weights.rows(); }
};

// Degree and Laplacian for an arbitrary symmetric weight matrix.
inline AffinityGraph graph_from_weights(const Eigen::MatrixXd& w) {
  require(w.rows() == w.cols(), ErrorKind::kInput, "weight matrix must be square");
  AffinityGraph g;
  g.weights = w;
  g.degree = w.rowwise().sum();
  g.laplacian = Eigen::MatrixXd(g.degree.asDiagonal()) - w;
  return g;
}

/// Blended graph. The endpoints copy one input exactly so that beta = 1
/// reproduces a graph built from W^F alone bit for bit.
inline AffinityGraph blend_graph(const Eigen::MatrixXd& wf, const Eigen::MatrixXd& wd, double beta) {
  require(beta >= 0.0 && beta <= 1.0, ErrorKind::kParameter, "beta must lie in [0, 1]");
  require(wf.rows() == wf.cols() && wd.rows() == wd.cols() && wf.rows() == wd.rows(), ErrorKind::kInput,
          "W^F and W^D must be square and of equal size");
  Eigen::MatrixXd w;
  if (beta == 1.0) {
    w = wf;
  } else if (beta == 0.0) {
    w = wd;
  } else {
    w = beta * wf + (1.0 - beta) * wd;
  }
  AffinityGraph g = graph_from_weights(w);
  g.feature_weights = wf;
  g.distribution_weights = wd;
  g.beta = beta;
  return g;
}

}  // namespace stnc::graph
