#pragma once

// Spatio-temporal distribution vector: per-word diagonal GMMs over feature
// locations (weighted EM) and the weighted Fisher-vector encoding built on them.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "stnc/bovw.hpp"
#include "stnc/error.hpp"
#include "stnc/featurestore.hpp"
#include "stnc/io.hpp"
#include "stnc/json_util.hpp"

namespace stnc::stdv {

using bovw::WordLocationSet;

// Diagonal-covariance mixture. Columns of `means` / `sigmas` are components.
struct DiagGmm {
  Eigen::VectorXd priors;  // G
  Eigen::MatrixXd means;   // D x G
  Eigen::MatrixXd sigmas;  // D x G, standard deviations

  Eigen::Index components() const { return priors.size(); }
  Eigen::Index dim() const { return means.rows(); }
  bool operator==(const DiagGmm& o) const {
    return priors == o.priors && means == o.means && sigmas == o.sigmas;
  }
};

struct EmOptions {
  double sigma_floor = 0.01;
  double tol = 1e-8;  // relative log-likelihood change
  int max_iter = 200;
  int kmeans_iter = 10;
};

struct EmReport {
  int iterations = 0;
  double log_likelihood = 0.0;
  bool converged = false;
};

namespace detail {

inline double log_gaussian_diag(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, const Eigen::VectorXd& sigma) {
  const Eigen::ArrayXd z = (x - mean).array() / sigma.array();
  return -0.5 * z.square().sum() - sigma.array().log().sum() -
         0.5 * static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi);
}

inline double log_sum_exp(const Eigen::VectorXd& v) {
  const double mx = v.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((v.array() - mx).exp().sum());
}

inline std::size_t count_distinct(const Eigen::MatrixXd& points) { return bovw::detail::count_distinct_columns(points); }

}  // namespace detail

/// Log of pi_g N(x; mu_g, sigma_g) for every component.
inline Eigen::VectorXd component_log_densities(const DiagGmm& gmm, const Eigen::VectorXd& x) {
  Eigen::VectorXd out(gmm.components());
  for (Eigen::Index g = 0; g < gmm.components(); ++g)
    out[g] = std::log(gmm.priors[g]) + detail::log_gaussian_diag(x, gmm.means.col(g), gmm.sigmas.col(g));
  return out;
}

/// G x n matrix of log pi_g N(x_i; mu_g, sigma_g) over the columns of `points`.
inline Eigen::MatrixXd component_log_density_matrix(const DiagGmm& gmm, const Eigen::MatrixXd& points) {
  const Eigen::Index n = points.cols();
  const double log2pi = std::log(2.0 * std::numbers::pi);
  Eigen::MatrixXd out(gmm.components(), n);
  for (Eigen::Index g = 0; g < gmm.components(); ++g) {
    const Eigen::ArrayXd inv = gmm.sigmas.col(g).array().inverse();
    const double c = std::log(gmm.priors[g]) - gmm.sigmas.col(g).array().log().sum() -
                     0.5 * static_cast<double>(gmm.dim()) * log2pi;
    const Eigen::ArrayXXd z = (points.colwise() - gmm.means.col(g)).array().colwise() * inv;
    out.row(g) = (c - 0.5 * z.square().colwise().sum()).matrix();
  }
  return out;
}

/// Posterior component probabilities, computed in log space.
inline Eigen::VectorXd responsibilities(const DiagGmm& gmm, const Eigen::VectorXd& x) {
  const Eigen::VectorXd lp = component_log_densities(gmm, x);
  return (lp.array() - detail::log_sum_exp(lp)).exp().matrix();
}

/// Weighted EM for a diagonal GMM over the columns of `points`. Each
/// responsibility is scaled by the point weight. Initialization: weighted
/// k-means++ seeding refined by a few weighted Lloyd passes.
inline DiagGmm fit_weighted_gmm(const Eigen::MatrixXd& points, const Eigen::VectorXd& weights, Eigen::Index components,
                                std::uint64_t seed, const EmOptions& opts = {}, EmReport* report = nullptr) {
  const Eigen::Index n = points.cols();
  const Eigen::Index dim = points.rows();
  const Eigen::Index G = components;
  require(G >= 1, ErrorKind::kParameter, "component count must be >= 1");
  require(weights.size() == n, ErrorKind::kInput, "weights misaligned with points");
  require(opts.sigma_floor > 0.0, ErrorKind::kParameter, "sigma floor must be positive");
  require((weights.array() > 0.0).all(), ErrorKind::kInput, "point weights must be positive");
  require(detail::count_distinct(points) >= static_cast<std::size_t>(G), ErrorKind::kCapacity,
          std::to_string(G) + " components exceed the distinct location count");

  const double total_w = weights.sum();
  const double floor2 = opts.sigma_floor * opts.sigma_floor;
  std::mt19937_64 rng(seed);

  // k-means++ seeding with probability proportional to w * d^2.
  Eigen::MatrixXd means(dim, G);
  {
    std::discrete_distribution<Eigen::Index> first(weights.data(), weights.data() + n);
    means.col(0) = points.col(first(rng));
    Eigen::VectorXd d2 = (points.colwise() - means.col(0)).colwise().squaredNorm().transpose();
    for (Eigen::Index g = 1; g < G; ++g) {
      const Eigen::VectorXd score = d2.cwiseProduct(weights);
      std::uniform_real_distribution<double> u(0.0, score.sum());
      const double target = u(rng);
      double acc = 0.0;
      Eigen::Index pick = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (score[i] <= 0.0) continue;
        acc += score[i];
        pick = i;
        if (acc >= target) break;
      }
      means.col(g) = points.col(pick);
      d2 = d2.cwiseMin((points.colwise() - means.col(g)).colwise().squaredNorm().transpose());
    }
  }
  std::vector<Eigen::Index> hard(static_cast<std::size_t>(n), 0);
  for (int it = 0; it < opts.kmeans_iter; ++it) {
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(dim, G);
    Eigen::VectorXd mass = Eigen::VectorXd::Zero(G);
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      (means.colwise() - points.col(i)).colwise().squaredNorm().minCoeff(&best);
      hard[static_cast<std::size_t>(i)] = best;
      sums.col(best) += weights[i] * points.col(i);
      mass[best] += weights[i];
    }
    for (Eigen::Index g = 0; g < G; ++g)
      if (mass[g] > 0.0) means.col(g) = sums.col(g) / mass[g];
  }

  DiagGmm gmm;
  gmm.means = means;
  gmm.priors = Eigen::VectorXd::Zero(G);
  gmm.sigmas = Eigen::MatrixXd::Zero(dim, G);
  {
    Eigen::MatrixXd var = Eigen::MatrixXd::Zero(dim, G);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index g = hard[static_cast<std::size_t>(i)];
      gmm.priors[g] += weights[i];
      var.col(g) += weights[i] * (points.col(i) - means.col(g)).cwiseAbs2();
    }
    const Eigen::VectorXd mean_all = points * weights / total_w;
    const Eigen::VectorXd var_all = ((points.colwise() - mean_all).cwiseAbs2() * weights) / total_w;
    for (Eigen::Index g = 0; g < G; ++g) {
      if (gmm.priors[g] > 0.0) {
        var.col(g) /= gmm.priors[g];
      } else {
        var.col(g) = var_all;
        gmm.priors[g] = 1e-3 * total_w;
      }
      gmm.sigmas.col(g) = var.col(g).cwiseMax(floor2).cwiseSqrt();
    }
    gmm.priors /= gmm.priors.sum();
  }

  Eigen::MatrixXd resp(G, n);
  double prev_ll = -std::numeric_limits<double>::infinity();
  EmReport rep;
  for (int iter = 1; iter <= opts.max_iter; ++iter) {
    // E step
    double ll = 0.0;
    Eigen::VectorXd point_ll(n);
    {
      const Eigen::MatrixXd lp = component_log_density_matrix(gmm, points);
      const Eigen::RowVectorXd mx = lp.colwise().maxCoeff();
      const Eigen::RowVectorXd lse =
          mx.array() + (lp.rowwise() - mx).array().exp().colwise().sum().log();
      resp = ((lp.rowwise() - lse).array().exp().rowwise() * weights.transpose().array()).matrix();
      point_ll = lse.transpose();
      ll = weights.dot(point_ll);
    }
    rep.iterations = iter;
    rep.log_likelihood = ll;
    if (iter > 1 && std::abs(ll - prev_ll) <= opts.tol * std::abs(ll)) {
      rep.converged = true;
      break;
    }
    prev_ll = ll;

    // M step
    const Eigen::VectorXd mass = resp.rowwise().sum();
    for (Eigen::Index g = 0; g < G; ++g) {
      if (mass[g] <= 1e-12 * total_w) {
        // Collapsed component: restart it on the worst-explained point.
        Eigen::Index worst = 0;
        point_ll.minCoeff(&worst);
        gmm.means.col(g) = points.col(worst);
        gmm.sigmas.col(g) = gmm.sigmas.rowwise().mean().cwiseMax(opts.sigma_floor);
        gmm.priors[g] = 1e-3;
        continue;
      }
      const Eigen::VectorXd mu = points * resp.row(g).transpose() / mass[g];
      const Eigen::VectorXd var = (points.colwise() - mu).cwiseAbs2() * resp.row(g).transpose() / mass[g];
      gmm.means.col(g) = mu;
      gmm.sigmas.col(g) = var.cwiseMax(floor2).cwiseSqrt();
      gmm.priors[g] = mass[g] / total_w;
    }
    gmm.priors /= gmm.priors.sum();
  }
  if (report) *report = rep;
  return gmm;
}

// ---------------------------------------------------------------------------

/// Weighted Fisher vector of one location set: for each component g the mean
/// gradient u_g then the deviation gradient v_g, each `dim` long, so the
/// result has 2 * dim * G entries. An empty set encodes to zeros. Scaling
/// every weight by the same positive factor leaves the result unchanged.
inline Eigen::VectorXd fisher_vector_weighted(const DiagGmm& gmm, const WordLocationSet& set) {
  const Eigen::Index G = gmm.components();
  const Eigen::Index dim = gmm.dim();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(2 * dim * G);
  if (set.empty()) return x;
  require(set.weights.size() == set.locations.size(), ErrorKind::kInput, "weights misaligned with locations");
  const double total = set.total_weight();
  require(total > 0.0, ErrorKind::kInput, "non-positive total weight on a non-empty location set");

  for (std::size_t i = 0; i < set.size(); ++i) {
    const Eigen::VectorXd l = set.locations[i];
    const Eigen::VectorXd gamma = responsibilities(gmm, l);
    for (Eigen::Index g = 0; g < G; ++g) {
      const double wg = set.weights[i] * gamma[g];
      const Eigen::ArrayXd z = (l - gmm.means.col(g)).array() / gmm.sigmas.col(g).array();
      x.segment(2 * dim * g, dim).array() += wg * z;
      x.segment(2 * dim * g + dim, dim).array() += wg * (z.square() - 1.0);
    }
  }
  for (Eigen::Index g = 0; g < G; ++g) {
    x.segment(2 * dim * g, dim) /= total * std::sqrt(gmm.priors[g]);
    x.segment(2 * dim * g + dim, dim) /= total * std::sqrt(2.0 * gmm.priors[g]);
  }
  return x;
}

struct Normalization {
  double power = 1.0;  // signed power sign(z)|z|^power; 1 disables
  bool l2 = false;
};

/// Concatenates per-word blocks in word order, then applies the optional
/// signed power and global L2 normalization. A zero vector stays zero.
inline Eigen::VectorXd stdv_concat(const std::vector<Eigen::VectorXd>& blocks, std::size_t expected_blocks,
                                   const Normalization& norm = {}) {
  require(blocks.size() == expected_blocks, ErrorKind::kInput,
          "expected " + std::to_string(expected_blocks) + " word blocks, got " + std::to_string(blocks.size()));
  require(norm.power > 0.0, ErrorKind::kParameter, "power normalization exponent must be positive");
  Eigen::Index len = 0;
  for (const auto& b : blocks) len += b.size();
  Eigen::VectorXd z(len);
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    z.segment(at, b.size()) = b;
    at += b.size();
  }
  if (norm.power != 1.0) {
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      z[i] = z[i] == 0.0 ? 0.0 : std::copysign(std::pow(std::abs(z[i]), norm.power), z[i]);
    }
  }
  if (norm.l2) {
    const double n2 = z.norm();
    if (n2 > 0.0) z /= n2;
  }
  return z;
}

// ---------------------------------------------------------------------------

struct LocationModelOptions {
  Eigen::Index components = 5;
  double sigma_floor = 0.01;
  double min_count = 10.0;  // total weight below which a word uses the shared model
  bool shared_only = false; // one location dictionary for every word
  // Fallback-only shared model is fitted on an evenly strided subsample of at
  // most this many locations. Ignored when shared_only is set.
  std::size_t shared_fallback_points = 20000;
  EmOptions em{};
};

struct LocationModel {
  std::vector<DiagGmm> per_word;     // indexed by word
  std::vector<bool> uses_shared;     // per word
  DiagGmm shared;

  Eigen::Index words() const { return static_cast<Eigen::Index>(per_word.size()); }
  const DiagGmm& for_word(Eigen::Index k) const { return per_word[static_cast<std::size_t>(k)]; }
  Eigen::Index block_size() const { return 2 * shared.dim() * shared.components(); }
};

namespace detail {

inline void append_set(const WordLocationSet& set, std::vector<Location>& pts, std::vector<double>& ws) {
  pts.insert(pts.end(), set.locations.begin(), set.locations.end());
  ws.insert(ws.end(), set.weights.begin(), set.weights.end());
}

inline std::pair<Eigen::MatrixXd, Eigen::VectorXd> to_matrix(const std::vector<Location>& pts,
                                                              const std::vector<double>& ws) {
  Eigen::MatrixXd p(3, static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) p.col(static_cast<Eigen::Index>(i)) = pts[i];
  return {p, Eigen::Map<const Eigen::VectorXd>(ws.data(), static_cast<Eigen::Index>(ws.size()))};
}

}  // namespace detail

/// Fits one location GMM per visual word on that word's locations pooled over
/// the training corpus (`corpus[sample][word]`). Sparse words, and words with
/// fewer distinct locations than components, take the shared model fitted on
/// every location of every word.
inline LocationModel fit_location_gmms(const std::vector<std::vector<WordLocationSet>>& corpus, Eigen::Index words,
                                       std::uint64_t seed, const LocationModelOptions& opts) {
  require(opts.components >= 1, ErrorKind::kParameter, "G must be >= 1");
  require(opts.min_count >= 0.0, ErrorKind::kParameter, "min_count must be >= 0");
  EmOptions em = opts.em;
  em.sigma_floor = opts.sigma_floor;

  std::vector<std::vector<Location>> pts(static_cast<std::size_t>(words));
  std::vector<std::vector<double>> ws(static_cast<std::size_t>(words));
  std::vector<Location> all_pts;
  std::vector<double> all_ws;
  for (const auto& sample_sets : corpus) {
    require(static_cast<Eigen::Index>(sample_sets.size()) == words, ErrorKind::kInput,
            "word location sets do not match codebook size");
    for (std::size_t k = 0; k < sample_sets.size(); ++k) {
      detail::append_set(sample_sets[k], pts[k], ws[k]);
      detail::append_set(sample_sets[k], all_pts, all_ws);
    }
  }
  require(!all_pts.empty(), ErrorKind::kCapacity, "no locations to fit the location model");

  LocationModel model;
  {
    const std::size_t cap = opts.shared_fallback_points;
    if (!opts.shared_only && cap > 0 && all_pts.size() > cap) {
      std::vector<Location> sub_pts;
      std::vector<double> sub_ws;
      for (std::size_t j = 0; j < cap; ++j) {
        const std::size_t i = j * all_pts.size() / cap;
        sub_pts.push_back(all_pts[i]);
        sub_ws.push_back(all_ws[i]);
      }
      all_pts = std::move(sub_pts);
      all_ws = std::move(sub_ws);
    }
    const auto [p, w] = detail::to_matrix(all_pts, all_ws);
    model.shared = fit_weighted_gmm(p, w, opts.components, mix_seed(seed, 0), em);
  }
  model.per_word.resize(static_cast<std::size_t>(words));
  model.uses_shared.assign(static_cast<std::size_t>(words), true);
  for (std::size_t k = 0; k < pts.size(); ++k) {
    model.per_word[k] = model.shared;
    if (opts.shared_only) continue;
    double total = 0.0;
    for (double v : ws[k]) total += v;
    if (total < opts.min_count || pts[k].empty()) continue;
    const auto [p, w] = detail::to_matrix(pts[k], ws[k]);
    if (detail::count_distinct(p) < static_cast<std::size_t>(opts.components)) continue;
    model.per_word[k] = fit_weighted_gmm(p, w, opts.components, mix_seed(seed, k + 1), em);
    model.uses_shared[k] = false;
  }
  return model;
}

/// STDV of one sample: Fisher vector of every L_k under its word's GMM, concatenated.
inline Eigen::VectorXd encode_stdv(const LocationModel& model, const std::vector<WordLocationSet>& sets,
                                   const Normalization& norm) {
  require(static_cast<Eigen::Index>(sets.size()) == model.words(), ErrorKind::kInput,
          "location sets do not match location model size");
  std::vector<Eigen::VectorXd> blocks;
  blocks.reserve(sets.size());
  for (std::size_t k = 0; k < sets.size(); ++k)
    blocks.push_back(fisher_vector_weighted(model.per_word[k], sets[k]));
  return stdv_concat(blocks, sets.size(), norm);
}

/// Multiplies every location by the sample extent (undoes normalization).
inline std::vector<WordLocationSet> scale_locations(std::vector<WordLocationSet> sets, const Extent& extent) {
  const Location e = extent.as_vector();
  for (auto& s : sets)
    for (auto& l : s.locations) l = l.cwiseProduct(e);
  return sets;
}

// ---------------------------------------------------------------------------
// Persistence: one row per (word, component): prior, mean (dim), sigma (dim).

inline void save_location_model(const LocationModel& model, const std::filesystem::path& path) {
  const Eigen::Index G = model.shared.components();
  const Eigen::Index dim = model.shared.dim();
  Eigen::MatrixXd rows((model.words() + 1) * G, 2 + 2 * dim);
  auto put = [&](Eigen::Index word_slot, const DiagGmm& gmm, bool shared) {
    for (Eigen::Index g = 0; g < G; ++g) {
      auto r = rows.row(word_slot * G + g);
      r[0] = shared ? 1.0 : 0.0;
      r[1] = gmm.priors[g];
      r.segment(2, dim) = gmm.means.col(g).transpose();
      r.segment(2 + dim, dim) = gmm.sigmas.col(g).transpose();
    }
  };
  put(0, model.shared, true);
  for (Eigen::Index k = 0; k < model.words(); ++k)
    put(k + 1, model.for_word(k), model.uses_shared[static_cast<std::size_t>(k)]);
  io::write_matrix(path, rows);
}

inline LocationModel load_location_model(const std::filesystem::path& path, Eigen::Index components) {
  const Eigen::MatrixXd rows = io::read_matrix(path);
  require(components >= 1 && rows.rows() % components == 0 && rows.cols() >= 4 && (rows.cols() - 2) % 2 == 0,
          ErrorKind::kSchema, "location model file has an unexpected shape");
  const Eigen::Index dim = (rows.cols() - 2) / 2;
  const Eigen::Index slots = rows.rows() / components;
  auto get = [&](Eigen::Index slot) {
    DiagGmm gmm{Eigen::VectorXd(components), Eigen::MatrixXd(dim, components), Eigen::MatrixXd(dim, components)};
    for (Eigen::Index g = 0; g < components; ++g) {
      const auto r = rows.row(slot * components + g);
      gmm.priors[g] = r[1];
      gmm.means.col(g) = r.segment(2, dim).transpose();
      gmm.sigmas.col(g) = r.segment(2 + dim, dim).transpose();
    }
    return gmm;
  };
  LocationModel model;
  model.shared = get(0);
  for (Eigen::Index k = 1; k < slots; ++k) {
    model.per_word.push_back(get(k));
    model.uses_shared.push_back(rows(k * components, 0) != 0.0);
  }
  return model;
}

}  // namespace stnc::stdv
