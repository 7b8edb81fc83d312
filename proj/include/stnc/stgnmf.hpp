#pragma once

// Graph-regularized NMF over the blended feature/distribution graph, the
// frozen-dictionary encoder for new samples, and the pseudoinverse baseline.
//
//   O = |Y - U V|_F^2 + lambda * tr(V L V^T),   L = D - W
//
// Y is M x N (one low-level histogram per column), U is M x K, V is K x N.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "stnc/error.hpp"
#include "stnc/featurestore.hpp"
#include "stnc/graph.hpp"
#include "stnc/io.hpp"
#include "stnc/json_util.hpp"

namespace stnc::stgnmf {

using graph::AffinityGraph;
using graph::Bandwidth;

inline constexpr double kDefaultEps = 1e-12;

inline double objective(const Eigen::MatrixXd& y, const Eigen::MatrixXd& u, const Eigen::MatrixXd& v,
                        const Eigen::MatrixXd& laplacian, double lambda) {
  const double recon = (y - u * v).squaredNorm();
  if (lambda == 0.0) return recon;
  const double smooth = (v * laplacian).cwiseProduct(v).sum();
  return recon + lambda * smooth;
}

// U <- U .* (Y V^T) ./ (U V V^T + eps)
inline void update_u(const Eigen::MatrixXd& y, Eigen::MatrixXd& u, const Eigen::MatrixXd& v, double eps) {
  const Eigen::MatrixXd num = y * v.transpose();
  const Eigen::MatrixXd den = u * (v * v.transpose());
  u = u.cwiseProduct(num).cwiseQuotient((den.array() + eps).matrix());
}

// V <- V .* (U^T Y + lambda V W) ./ (U^T U V + lambda V D + eps)
inline void update_v(const Eigen::MatrixXd& y, const Eigen::MatrixXd& u, Eigen::MatrixXd& v,
                     const Eigen::MatrixXd& weights, const Eigen::VectorXd& degree, double lambda, double eps) {
  Eigen::MatrixXd num = u.transpose() * y;
  Eigen::MatrixXd den = (u.transpose() * u) * v;
  if (lambda != 0.0) {
    num.noalias() += lambda * (v * weights);
    den.noalias() += lambda * (v * degree.asDiagonal());
  }
  v = v.cwiseProduct(num).cwiseQuotient((den.array() + eps).matrix());
}

enum class Step { kU, kV };

struct TrainOptions {
  std::uint64_t seed = 0;
  int max_iter = 500;
  double tol = 1e-6;  // relative objective change; 0 runs every iteration
  double eps = kDefaultEps;
  Bandwidth feature_bandwidth{};
  Bandwidth distribution_bandwidth{};
  std::optional<Eigen::Index> knn;
  bool normalize_export = true;
  // Called after each individual U or V update.
  std::function<void(Step, const Eigen::MatrixXd& u, const Eigen::MatrixXd& v)> observer;
};

struct ComponentModel {
  Eigen::MatrixXd u;  // M x K_c, non-negative
};

struct TrainReport {
  std::vector<double> objective_trace;  // entry 0 is the initial objective
  int iterations = 0;
  bool converged = false;
  double lambda = 0.0;
  double beta = 1.0;
  Eigen::Index components = 0;
  std::uint64_t seed = 0;
  double tol = 0.0;
  int max_iter = 0;
  double feature_delta = 0.0;
  double distribution_delta = 0.0;
  std::optional<Eigen::Index> knn;

  double final_objective() const { return objective_trace.empty() ? 0.0 : objective_trace.back(); }
};

struct TrainResult {
  ComponentModel model;
  Eigen::MatrixXd v;  // K_c x N
  TrainReport report;
};

inline Eigen::MatrixXd random_uniform(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  // Open interval (0, 1) so that no factor entry starts at an absorbing zero.
  std::uniform_real_distribution<double> dist(std::nextafter(0.0, 1.0), 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

/// Unit-L2 columns of U with the scale moved into the rows of V (U V unchanged
/// up to rounding). Zero columns are left untouched.
inline void normalize_factors(Eigen::MatrixXd& u, Eigen::MatrixXd& v) {
  for (Eigen::Index k = 0; k < u.cols(); ++k) {
    const double n = u.col(k).norm();
    if (n <= 0.0) continue;
    u.col(k) /= n;
    v.row(k) *= n;
  }
}

inline void check_training_inputs(const Eigen::MatrixXd& y, Eigen::Index components, double lambda) {
  require(y.allFinite(), ErrorKind::kDomain, "Y has non-finite entries");
  require((y.array() >= 0.0).all(), ErrorKind::kDomain, "Y has negative entries");
  require(components >= 1 && components < std::min(y.rows(), y.cols()), ErrorKind::kParameter,
          "K_c must satisfy 1 <= K_c < min(M, N)");
  require(lambda >= 0.0 && std::isfinite(lambda), ErrorKind::kParameter, "lambda must be >= 0");
}

/// Multiplicative updates from (U0, V0) against a fixed graph.
inline TrainResult train_from(const Eigen::MatrixXd& y, const AffinityGraph& graph, Eigen::MatrixXd u,
                              Eigen::MatrixXd v, double lambda, const TrainOptions& opts) {
  require(graph.size() == y.cols(), ErrorKind::kInput, "graph size does not match sample count");
  require(u.rows() == y.rows() && v.cols() == y.cols() && u.cols() == v.rows(), ErrorKind::kInput,
          "factor shapes are not conformable with Y");
  TrainResult res;
  auto& rep = res.report;
  rep.lambda = lambda;
  rep.beta = graph.beta;
  rep.components = u.cols();
  rep.seed = opts.seed;
  rep.tol = opts.tol;
  rep.max_iter = opts.max_iter;
  rep.knn = opts.knn;

  double prev = objective(y, u, v, graph.laplacian, lambda);
  rep.objective_trace.push_back(prev);
  for (int it = 1; it <= opts.max_iter; ++it) {
    update_u(y, u, v, opts.eps);
    if (opts.observer) opts.observer(Step::kU, u, v);
    update_v(y, u, v, graph.weights, graph.degree, lambda, opts.eps);
    if (opts.observer) opts.observer(Step::kV, u, v);
    const double obj = objective(y, u, v, graph.laplacian, lambda);
    rep.objective_trace.push_back(obj);
    rep.iterations = it;
    const double scale = std::max(std::abs(prev), std::numeric_limits<double>::min());
    if (opts.tol > 0.0 && std::abs(prev - obj) / scale < opts.tol) {
      rep.converged = true;
      break;
    }
    prev = obj;
  }
  if (opts.normalize_export) normalize_factors(u, v);
  res.model.u = std::move(u);
  res.v = std::move(v);
  return res;
}

/// Plain GNMF: seeded uniform initialization, then multiplicative updates
/// against the given graph.
inline TrainResult train_with_graph(const Eigen::MatrixXd& y, const AffinityGraph& graph, Eigen::Index components,
                                    double lambda, const TrainOptions& opts) {
  check_training_inputs(y, components, lambda);
  std::mt19937_64 rng(opts.seed);
  Eigen::MatrixXd u = random_uniform(y.rows(), components, rng);
  Eigen::MatrixXd v = random_uniform(components, y.cols(), rng);
  return train_from(y, graph, std::move(u), std::move(v), lambda, opts);
}

/// Builds W^F from the columns of Y and W^D from the columns of Z, blends
/// them with beta and trains.
inline TrainResult train(const Eigen::MatrixXd& y, const Eigen::MatrixXd& z, Eigen::Index components, double lambda,
                         double beta, const TrainOptions& opts) {
  check_training_inputs(y, components, lambda);
  require(z.cols() == y.cols(), ErrorKind::kInput, "Y and Z must have one column per sample");
  require(beta >= 0.0 && beta <= 1.0, ErrorKind::kParameter, "beta must lie in [0, 1]");
  const auto wf = graph::heat_kernel_matrix(y, opts.feature_bandwidth, opts.knn);
  const auto wd = graph::heat_kernel_matrix(z, opts.distribution_bandwidth, opts.knn);
  const AffinityGraph g = graph::blend_graph(wf.weights, wd.weights, beta);
  TrainResult res = train_with_graph(y, g, components, lambda, opts);
  res.report.feature_delta = wf.delta;
  res.report.distribution_delta = wd.delta;
  return res;
}

// ---------------------------------------------------------------------------
// Out-of-sample encoding

struct EncodeOptions {
  std::uint64_t seed = 0;
  int max_iter = 300;
  double tol = 1e-6;
  double eps = kDefaultEps;
  double feature_delta = 0.0;       // bandwidths fixed at training time
  double distribution_delta = 0.0;
  std::optional<Eigen::Index> knn;
  // Couple test codes only to each other (the printed test-side update) instead
  // of to the training codes through the joint graph.
  bool strict_test_block = false;
  std::function<void(const Eigen::MatrixXd& v_test)> observer;
};

struct EncodeResult {
  Eigen::MatrixXd v;               // K_c x N_test
  std::vector<bool> degenerate;    // all-zero test histogram
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;
};

struct JointBlocks {
  Eigen::MatrixXd train_test;  // N_train x N_test
  Eigen::MatrixXd test_test;   // N_test x N_test
  Eigen::VectorXd test_degree; // joint row sums over test rows
};

/// Joint heat-kernel graph over [train, test] columns with the training
/// bandwidths and blend, returned as the blocks the test update needs.
inline JointBlocks joint_graph_blocks(const Eigen::MatrixXd& y_train, const Eigen::MatrixXd& z_train,
                                      const Eigen::MatrixXd& y_test, const Eigen::MatrixXd& z_test, double beta,
                                      const EncodeOptions& opts) {
  const Eigen::Index ntr = y_train.cols();
  const Eigen::Index nte = y_test.cols();
  Eigen::MatrixXd y_all(y_train.rows(), ntr + nte);
  y_all << y_train, y_test;
  Eigen::MatrixXd z_all(z_train.rows(), ntr + nte);
  z_all << z_train, z_test;
  const auto wf = graph::heat_kernel_matrix(y_all, Bandwidth::fixed(opts.feature_delta), opts.knn);
  const auto wd = graph::heat_kernel_matrix(z_all, Bandwidth::fixed(opts.distribution_delta), opts.knn);
  const AffinityGraph g = graph::blend_graph(wf.weights, wd.weights, beta);
  JointBlocks b;
  b.train_test = g.weights.topRightCorner(ntr, nte);
  b.test_test = g.weights.bottomRightCorner(nte, nte);
  b.test_degree = g.degree.tail(nte);
  if (opts.strict_test_block) {
    b.train_test.setZero();
    b.test_degree = b.test_test.rowwise().sum();
  }
  return b;
}

// Test-dependent part of the joint objective: reconstruction of the test
// columns plus every graph term touching a test column.
inline double test_objective(const Eigen::MatrixXd& u, const Eigen::MatrixXd& v_train, const Eigen::MatrixXd& y_test,
                             const Eigen::MatrixXd& v_test, const JointBlocks& b, double lambda) {
  double value = (y_test - u * v_test).squaredNorm();
  if (lambda == 0.0) return value;
  double smooth = 0.0;
  for (Eigen::Index j = 0; j < v_test.cols(); ++j) {
    for (Eigen::Index i = 0; i < v_train.cols(); ++i)
      if (b.train_test(i, j) != 0.0) smooth += b.train_test(i, j) * (v_train.col(i) - v_test.col(j)).squaredNorm();
    for (Eigen::Index i = 0; i < v_test.cols(); ++i)
      if (b.test_test(i, j) != 0.0) smooth += 0.5 * b.test_test(i, j) * (v_test.col(i) - v_test.col(j)).squaredNorm();
  }
  return value + lambda * smooth;
}

/// Codes for new samples with U and V_train frozen:
///   V_t <- V_t .* (U^T Y_t + lambda (V_train W_tr,te + V_t W_te,te))
///              ./ (U^T U V_t + lambda V_t D_te + eps)
inline EncodeResult encode_test(const ComponentModel& model, const Eigen::MatrixXd& v_train,
                                const Eigen::MatrixXd& y_test, const Eigen::MatrixXd& z_test,
                                const Eigen::MatrixXd& y_train, const Eigen::MatrixXd& z_train, double lambda,
                                double beta, const EncodeOptions& opts) {
  const Eigen::MatrixXd& u = model.u;
  require(y_test.rows() == u.rows() && y_train.rows() == u.rows(), ErrorKind::kInput,
          "low-level dimension differs from the trained dictionary");
  require(z_test.rows() == z_train.rows(), ErrorKind::kInput, "STDV dimension differs from training");
  require(z_test.cols() == y_test.cols() && z_train.cols() == y_train.cols() && v_train.cols() == y_train.cols(),
          ErrorKind::kInput, "per-sample column counts disagree");
  require(v_train.rows() == u.cols(), ErrorKind::kInput, "V_train rows differ from component count");
  require((y_test.array() >= 0.0).all(), ErrorKind::kDomain, "test histograms have negative entries");
  require(lambda >= 0.0 && beta >= 0.0 && beta <= 1.0, ErrorKind::kParameter, "lambda/beta out of range");

  EncodeResult res;
  const Eigen::Index nte = y_test.cols();
  for (Eigen::Index j = 0; j < nte; ++j) res.degenerate.push_back(!(y_test.col(j).array() != 0.0).any());
  if (nte == 0) {
    res.v.resize(u.cols(), 0);
    return res;
  }

  JointBlocks blocks;
  if (lambda != 0.0) {
    require(opts.feature_delta > 0.0 && opts.distribution_delta > 0.0, ErrorKind::kParameter,
            "encoding needs the training bandwidths");
    blocks = joint_graph_blocks(y_train, z_train, y_test, z_test, beta, opts);
  } else {
    blocks.train_test = Eigen::MatrixXd::Zero(y_train.cols(), nte);
    blocks.test_test = Eigen::MatrixXd::Zero(nte, nte);
    blocks.test_degree = Eigen::VectorXd::Zero(nte);
  }

  std::mt19937_64 rng(opts.seed);
  Eigen::MatrixXd v = random_uniform(u.cols(), nte, rng);
  const Eigen::MatrixXd uty = u.transpose() * y_test;
  const Eigen::MatrixXd utu = u.transpose() * u;
  const Eigen::MatrixXd train_pull = v_train * blocks.train_test;

  double prev = test_objective(u, v_train, y_test, v, blocks, lambda);
  res.objective_trace.push_back(prev);
  for (int it = 1; it <= opts.max_iter; ++it) {
    Eigen::MatrixXd num = uty;
    Eigen::MatrixXd den = utu * v;
    if (lambda != 0.0) {
      num.noalias() += lambda * (train_pull + v * blocks.test_test);
      den.noalias() += lambda * (v * blocks.test_degree.asDiagonal());
    }
    v = v.cwiseProduct(num).cwiseQuotient((den.array() + opts.eps).matrix());
    if (opts.observer) opts.observer(v);
    const double obj = test_objective(u, v_train, y_test, v, blocks, lambda);
    res.objective_trace.push_back(obj);
    res.iterations = it;
    const double scale = std::max(std::abs(prev), std::numeric_limits<double>::min());
    if (opts.tol > 0.0 && std::abs(prev - obj) / scale < opts.tol) {
      res.converged = true;
      break;
    }
    prev = obj;
  }
  res.v = std::move(v);
  return res;
}

/// Unconstrained least-squares codes V = pinv(U) Y_t (minimum-norm when U is
/// rank deficient). Entries may be negative.
inline Eigen::MatrixXd pseudoinverse_encode(const ComponentModel& model, const Eigen::MatrixXd& y_test) {
  require(y_test.rows() == model.u.rows(), ErrorKind::kInput, "low-level dimension differs from the dictionary");
  const Eigen::MatrixXd pinv = model.u.completeOrthogonalDecomposition().pseudoInverse();
  return pinv * y_test;
}

// ---------------------------------------------------------------------------
// Persistence: U and V as matrix files plus a JSON sidecar.

inline Json report_to_json(const TrainReport& r) {
  Json j{{"lambda", r.lambda},
         {"beta", r.beta},
         {"components", r.components},
         {"seed", r.seed},
         {"tol", r.tol},
         {"max_iter", r.max_iter},
         {"feature_delta", r.feature_delta},
         {"distribution_delta", r.distribution_delta},
         {"iterations", r.iterations},
         {"converged", r.converged},
         {"final_objective", r.final_objective()},
         {"objective_trace", r.objective_trace}};
  j["knn"] = r.knn ? Json(*r.knn) : Json(nullptr);
  return j;
}

inline TrainReport report_from_json(const Json& j) {
  TrainReport r;
  r.lambda = j.at("lambda").get<double>();
  r.beta = j.at("beta").get<double>();
  r.components = j.at("components").get<Eigen::Index>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.tol = j.at("tol").get<double>();
  r.max_iter = j.at("max_iter").get<int>();
  r.feature_delta = j.at("feature_delta").get<double>();
  r.distribution_delta = j.at("distribution_delta").get<double>();
  r.iterations = j.at("iterations").get<int>();
  r.converged = j.at("converged").get<bool>();
  r.objective_trace = j.at("objective_trace").get<std::vector<double>>();
  if (!j.at("knn").is_null()) r.knn = j.at("knn").get<Eigen::Index>();
  return r;
}

inline void save_model(const TrainResult& res, const std::filesystem::path& dir) {
  io::write_matrix(dir / "U.bin", res.model.u);
  io::write_matrix(dir / "V_train.bin", res.v);
  io::write_text(dir / "model.json", report_to_json(res.report).dump(2));
}

inline TrainResult load_model(const std::filesystem::path& dir) {
  TrainResult res;
  res.model.u = io::read_matrix(dir / "U.bin");
  res.v = io::read_matrix(dir / "V_train.bin");
  try {
    res.report = report_from_json(Json::parse(io::read_text(dir / "model.json")));
  } catch (const Json::exception& e) {
    fail(ErrorKind::kSchema, "model sidecar: " + std::string(e.what()));
  }
  require(res.model.u.cols() == res.v.rows(), ErrorKind::kSchema, "U and V_train disagree on K_c");
  return res;
}

}  // namespace stnc::stgnmf
