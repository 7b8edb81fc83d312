#pragma once

// Bag of visual words: k-means codebook, localized soft assignment,
// histogram pooling, per-word location sets and the space-time pyramid.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "stnc/error.hpp"
#include "stnc/featurestore.hpp"
#include "stnc/io.hpp"
#include "stnc/json_util.hpp"

namespace stnc::bovw {

struct Codebook {
  Eigen::MatrixXd centers;  // K_w x m, one word per row

  Eigen::Index words() const { return centers.rows(); }
  Eigen::Index dim() const { return centers.cols(); }
};

struct CodebookReport {
  std::uint64_t seed = 0;
  int iterations = 0;
  double inertia = 0.0;
};

struct KMeansOptions {
  int max_iter = 100;
};

namespace detail {

inline std::size_t count_distinct_columns(const Eigen::MatrixXd& x) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(x.cols()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  auto less = [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      if (x(r, a) != x(r, b)) return x(r, a) < x(r, b);
    }
    return false;
  };
  std::sort(order.begin(), order.end(), less);
  std::size_t distinct = order.empty() ? 0 : 1;
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (less(order[i - 1], order[i])) ++distinct;
  }
  return distinct;
}

// Nearest row of `centers` to `x`; ties go to the lowest index.
inline std::pair<Eigen::Index, double> nearest_row(const Eigen::MatrixXd& centers, const Eigen::VectorXd& x) {
  Eigen::Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < centers.rows(); ++k) {
    const double d = (centers.row(k).transpose() - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return {best, best_d};
}

}  // namespace detail

inline constexpr Eigen::Index kAssignBlock = 4096;

/// k-means with k-means++ seeding over the columns of `descriptors` (m x n).
/// Deterministic for a fixed seed.
inline Codebook train_codebook(const Eigen::MatrixXd& descriptors, Eigen::Index words, std::uint64_t seed,
                               KMeansOptions opts = {}, CodebookReport* report = nullptr) {
  require(words >= 1, ErrorKind::kParameter, "codebook size must be positive");
  require(descriptors.allFinite(), ErrorKind::kInput, "non-finite training descriptor");
  const std::size_t distinct = detail::count_distinct_columns(descriptors);
  require(distinct >= static_cast<std::size_t>(words), ErrorKind::kCapacity,
          std::to_string(distinct) + " distinct descriptors cannot support " + std::to_string(words) + " words");

  const Eigen::Index n = descriptors.cols();
  const Eigen::Index m = descriptors.rows();
  std::mt19937_64 rng(seed);

  Codebook cb;
  cb.centers.resize(words, m);
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  cb.centers.row(0) = descriptors.col(first(rng)).transpose();
  Eigen::VectorXd d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2[i] = (descriptors.col(i).transpose() - cb.centers.row(0)).squaredNorm();
  for (Eigen::Index k = 1; k < words; ++k) {
    const double total = d2.sum();
    std::uniform_real_distribution<double> u(0.0, total);
    const double target = u(rng);
    double acc = 0.0;
    Eigen::Index pick = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      acc += d2[i];
      pick = i;
      if (acc >= target) break;
    }
    cb.centers.row(k) = descriptors.col(pick).transpose();
    for (Eigen::Index i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], (descriptors.col(i).transpose() - cb.centers.row(k)).squaredNorm());
  }

  std::vector<Eigen::Index> assign(static_cast<std::size_t>(n), -1);
  Eigen::VectorXd dist(n);
  int iter = 0;
  double inertia = 0.0;
  for (iter = 1; iter <= opts.max_iter; ++iter) {
    bool changed = false;
    inertia = 0.0;
    // Candidate nearest centers from |c|^2 - 2 c.x in column blocks; the
    // stored distance is recomputed directly for the chosen center.
    const Eigen::VectorXd c2 = cb.centers.rowwise().squaredNorm();
    const Eigen::MatrixXd ct = cb.centers.transpose();
    Eigen::MatrixXd scores;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index in_block = i % kAssignBlock;
      if (in_block == 0) {
        const Eigen::Index len = std::min(kAssignBlock, n - i);
        scores.noalias() = -2.0 * cb.centers * descriptors.middleCols(i, len);
        scores.colwise() += c2;
      }
      Eigen::Index k = 0;
      scores.col(in_block).minCoeff(&k);
      const double d = (ct.col(k) - descriptors.col(i)).squaredNorm();
      if (assign[static_cast<std::size_t>(i)] != k) changed = true;
      assign[static_cast<std::size_t>(i)] = k;
      dist[i] = d;
      inertia += d;
    }
    if (!changed && iter > 1) break;

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(m, words);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(words);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.col(assign[static_cast<std::size_t>(i)]) += descriptors.col(i);
      counts[assign[static_cast<std::size_t>(i)]] += 1.0;
    }
    for (Eigen::Index k = 0; k < words; ++k) {
      if (counts[k] > 0) {
        cb.centers.row(k) = (sums.col(k) / counts[k]).transpose();
        continue;
      }
      // Empty cluster: move it onto the point farthest from its center.
      Eigen::Index far = 0;
      dist.maxCoeff(&far);
      cb.centers.row(k) = descriptors.col(far).transpose();
      dist[far] = 0.0;
    }
  }
  if (report) *report = {seed, std::min(iter, opts.max_iter), inertia};
  return cb;
}

inline Codebook train_codebook(const std::vector<Eigen::VectorXd>& descriptors, Eigen::Index words,
                               std::uint64_t seed, KMeansOptions opts = {}, CodebookReport* report = nullptr) {
  require(!descriptors.empty(), ErrorKind::kCapacity, "no training descriptors");
  Eigen::MatrixXd x(descriptors.front().size(), static_cast<Eigen::Index>(descriptors.size()));
  for (std::size_t i = 0; i < descriptors.size(); ++i) {
    require(descriptors[i].size() == x.rows(), ErrorKind::kInput, "descriptor length mismatch");
    x.col(static_cast<Eigen::Index>(i)) = descriptors[i];
  }
  return train_codebook(x, words, seed, opts, report);
}

// ---------------------------------------------------------------------------

struct WordWeight {
  Eigen::Index word = 0;
  double weight = 0.0;
};

// Nearest words first; at most k_nn entries, weights sum to 1.
using SoftAssignment = std::vector<WordWeight>;

/// Localized soft assignment: only the k_nn nearest centers receive weight,
/// proportional to exp(-smoothing * d^2) and renormalized over those neighbors.
inline SoftAssignment assign_soft(const Codebook& codebook, const Eigen::VectorXd& descriptor, Eigen::Index k_nn,
                                  double smoothing) {
  require(k_nn >= 1 && k_nn <= codebook.words(), ErrorKind::kParameter, "k_nn must lie in [1, K_w]");
  require(smoothing > 0.0 && std::isfinite(smoothing), ErrorKind::kParameter, "smoothing must be positive");
  require(descriptor.size() == codebook.dim(), ErrorKind::kInput, "descriptor length does not match codebook");
  require(descriptor.allFinite(), ErrorKind::kInput, "non-finite descriptor");

  std::vector<std::pair<double, Eigen::Index>> d2(static_cast<std::size_t>(codebook.words()));
  for (Eigen::Index k = 0; k < codebook.words(); ++k) {
    d2[static_cast<std::size_t>(k)] = {(codebook.centers.row(k).transpose() - descriptor).squaredNorm(), k};
  }
  std::partial_sort(d2.begin(), d2.begin() + k_nn, d2.end());

  SoftAssignment out(static_cast<std::size_t>(k_nn));
  const double shift = d2.front().first;
  double total = 0.0;
  for (Eigen::Index j = 0; j < k_nn; ++j) {
    const auto& [dist, word] = d2[static_cast<std::size_t>(j)];
    const double w = std::exp(-smoothing * (dist - shift));
    out[static_cast<std::size_t>(j)] = {word, w};
    total += w;
  }
  for (auto& ww : out) ww.weight /= total;
  return out;
}

/// 1 / mean squared nearest-center distance over an evenly strided
/// subsample of at most `max_samples` columns.
inline double estimate_smoothing(const Codebook& codebook, const Eigen::MatrixXd& descriptors,
                                 Eigen::Index max_samples = 2000) {
  require(descriptors.cols() > 0, ErrorKind::kInput, "no descriptors for smoothing estimate");
  const Eigen::Index stride = std::max<Eigen::Index>(1, descriptors.cols() / max_samples);
  double sum = 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < descriptors.cols(); i += stride) {
    sum += detail::nearest_row(codebook.centers, descriptors.col(i)).second;
    ++count;
  }
  const double mean = sum / static_cast<double>(count);
  require(mean > 0.0, ErrorKind::kParameter, "descriptors coincide with centers; smoothing undefined");
  return 1.0 / mean;
}

struct LowLevelRep {
  Eigen::VectorXd y;        // L1-normalized word histogram
  bool degenerate = false;  // no features were pooled
};

inline LowLevelRep pool_histogram(const std::vector<SoftAssignment>& assignments, Eigen::Index words) {
  LowLevelRep rep;
  rep.y = Eigen::VectorXd::Zero(words);
  for (const auto& a : assignments) {
    for (const auto& ww : a) {
      require(ww.word >= 0 && ww.word < words, ErrorKind::kInput, "word index out of range");
      rep.y[ww.word] += ww.weight;
    }
  }
  const double total = rep.y.sum();
  if (total > 0.0) {
    rep.y /= total;
  } else {
    rep.degenerate = true;
  }
  return rep;
}

struct WordLocationSet {
  std::vector<Location> locations;
  std::vector<double> weights;  // strictly positive

  std::size_t size() const { return locations.size(); }
  bool empty() const { return locations.empty(); }
  double total_weight() const { return std::accumulate(weights.begin(), weights.end(), 0.0); }
  void add(const Location& l, double w) {
    locations.push_back(l);
    weights.push_back(w);
  }
};

/// L_k for every word k (indexed by word). A feature contributes its location
/// to every word it carries positive weight on.
inline std::vector<WordLocationSet> collect_word_locations(const VideoSample& sample,
                                                           const std::vector<SoftAssignment>& assignments,
                                                           Eigen::Index words) {
  require(assignments.size() == sample.features.size(), ErrorKind::kInput,
          "assignments (" + std::to_string(assignments.size()) + ") misaligned with features (" +
              std::to_string(sample.features.size()) + ")");
  std::vector<WordLocationSet> sets(static_cast<std::size_t>(words));
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    for (const auto& ww : assignments[i]) {
      require(ww.word >= 0 && ww.word < words, ErrorKind::kInput, "word index out of range");
      if (ww.weight > 0.0) sets[static_cast<std::size_t>(ww.word)].add(sample.features[i].location, ww.weight);
    }
  }
  return sets;
}

// ---------------------------------------------------------------------------

struct PyramidSpec {
  std::vector<int> spatial{1, 2};   // s -> s x s spatial grid
  std::vector<int> temporal{1, 2};  // t -> t temporal segments

  std::size_t cell_count() const {
    std::size_t s = 0;
    for (int v : spatial) s += static_cast<std::size_t>(v * v);
    std::size_t t = 0;
    for (int v : temporal) t += static_cast<std::size_t>(v);
    return s * t;
  }
};

inline int cell_index(double coord, int divisions) {
  return std::clamp(static_cast<int>(std::floor(coord * divisions)), 0, divisions - 1);
}

/// Space-time pyramid: for every (temporal level, spatial level) pair, in that
/// nesting order, one histogram per cell with cells ordered (t, y, x).
/// Cell histograms stay un-normalized; the concatenation is L1-normalized
/// when `normalize` is set.
inline Eigen::VectorXd stp_pool(const VideoSample& sample, const std::vector<SoftAssignment>& assignments,
                                Eigen::Index words, const PyramidSpec& grid = {}, bool normalize = true) {
  require(assignments.size() == sample.features.size(), ErrorKind::kInput, "assignments misaligned with features");
  for (int v : grid.spatial) require(v >= 1, ErrorKind::kParameter, "spatial subdivision must be >= 1");
  for (int v : grid.temporal) require(v >= 1, ErrorKind::kParameter, "temporal subdivision must be >= 1");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.cell_count()) * words);
  Eigen::Index base_cell = 0;
  for (int t_div : grid.temporal) {
    for (int s_div : grid.spatial) {
      for (std::size_t i = 0; i < assignments.size(); ++i) {
        const Location& l = sample.features[i].location;
        const Eigen::Index cell = base_cell + (cell_index(l[2], t_div) * s_div + cell_index(l[1], s_div)) * s_div +
                                  cell_index(l[0], s_div);
        for (const auto& ww : assignments[i]) out[cell * words + ww.word] += ww.weight;
      }
      base_cell += static_cast<Eigen::Index>(t_div) * s_div * s_div;
    }
  }
  if (normalize) {
    const double total = out.sum();
    if (total > 0.0) out /= total;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence: centers as a matrix file plus a JSON sidecar.

inline void save_codebook(const Codebook& cb, const CodebookReport& report, double smoothing,
                          const std::filesystem::path& matrix_path, const std::filesystem::path& sidecar_path) {
  io::write_matrix(matrix_path, cb.centers);
  Json side{{"words", cb.words()},     {"descriptor_dim", cb.dim()}, {"seed", report.seed},
            {"iterations", report.iterations}, {"inertia", report.inertia},    {"smoothing", smoothing}};
  io::write_text(sidecar_path, side.dump(2));
}

inline Codebook load_codebook(const std::filesystem::path& matrix_path) {
  Codebook cb{io::read_matrix(matrix_path)};
  require(cb.words() >= 1 && cb.centers.allFinite(), ErrorKind::kSchema, "invalid codebook file");
  return cb;
}

}  // namespace stnc::bovw
