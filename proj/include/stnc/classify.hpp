#pragma once

// RBF-chi2 kernels, one-vs-rest SMO on precomputed kernels, kernel fusion,
// leave-one-group-out splits and accuracy metrics.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "stnc/error.hpp"
#include "stnc/json_util.hpp"

namespace stnc::classify {

/// Half the sum of (a_k - b_k)^2 / (a_k + b_k); a 0/0 term counts as 0.
inline double chi2_distance(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) {
  require(a.size() == b.size(), ErrorKind::kInput, "chi2 operands differ in length");
  double d = 0.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    require(a[k] >= 0.0 && b[k] >= 0.0, ErrorKind::kDomain, "chi2 distance needs non-negative entries");
    const double s = a[k] + b[k];
    if (s > 0.0) {
      const double diff = a[k] - b[k];
      d += diff * diff / s;
    }
  }
  return 0.5 * d;
}

/// Columns rescaled to unit L1 norm; all-zero columns stay zero.
inline Eigen::MatrixXd l1_normalize_columns(const Eigen::MatrixXd& v) {
  require((v.array() >= 0.0).all(), ErrorKind::kDomain, "chi2 inputs must be non-negative");
  Eigen::MatrixXd out = v;
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    const double s = out.col(j).sum();
    if (s > 0.0) out.col(j) /= s;
  }
  return out;
}

/// Mean chi2 distance over unordered pairs i < j of training columns.
inline double mean_train_distance(const Eigen::MatrixXd& v) {
  const Eigen::Index n = v.cols();
  require(n >= 2, ErrorKind::kInput, "need at least two training columns");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) sum += chi2_distance(v.col(i), v.col(j));
  const double mean = sum / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
  require(mean > 0.0, ErrorKind::kBandwidth, "all training columns identical; chi2 normalizer is zero");
  return mean;
}

struct KernelMatrix {
  Eigen::MatrixXd values;  // rows: V_a columns, cols: V_b columns
  double normalizer = 0.0; // A
  bool l1_normalized = true;
  std::string provenance;
};

/// K_ij = exp(-D(a_i, b_j) / A). Inputs are re-L1-normalized first when
/// `renormalize` is set.
inline KernelMatrix chi2_kernel_matrix(const Eigen::MatrixXd& va, const Eigen::MatrixXd& vb, double normalizer,
                                       bool renormalize = true, std::string provenance = {}) {
  require(normalizer > 0.0 && std::isfinite(normalizer), ErrorKind::kParameter, "chi2 normalizer A must be positive");
  require(va.rows() == vb.rows(), ErrorKind::kInput, "kernel operands differ in dimension");
  const Eigen::MatrixXd a = renormalize ? l1_normalize_columns(va) : va;
  const Eigen::MatrixXd b = renormalize ? l1_normalize_columns(vb) : vb;
  KernelMatrix k;
  k.normalizer = normalizer;
  k.l1_normalized = renormalize;
  k.provenance = std::move(provenance);
  k.values.resize(a.cols(), b.cols());
  for (Eigen::Index j = 0; j < b.cols(); ++j)
    for (Eigen::Index i = 0; i < a.cols(); ++i) k.values(i, j) = std::exp(-chi2_distance(a.col(i), b.col(j)) / normalizer);
  return k;
}

/// Entrywise convex combination; uniform weights when none are given.
inline KernelMatrix fuse_kernels(const std::vector<KernelMatrix>& kernels, std::vector<double> weights = {}) {
  require(!kernels.empty(), ErrorKind::kInput, "no kernels to fuse");
  if (weights.empty()) weights.assign(kernels.size(), 1.0 / static_cast<double>(kernels.size()));
  require(weights.size() == kernels.size(), ErrorKind::kInput, "one fusion weight per kernel is required");
  double total = 0.0;
  for (double w : weights) {
    require(w >= 0.0, ErrorKind::kParameter, "fusion weights must be non-negative");
    total += w;
  }
  require(std::abs(total - 1.0) <= 1e-9, ErrorKind::kParameter, "fusion weights must sum to 1");
  KernelMatrix out;
  out.values = Eigen::MatrixXd::Zero(kernels.front().values.rows(), kernels.front().values.cols());
  out.provenance = "fused(";
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    require(kernels[i].values.rows() == out.values.rows() && kernels[i].values.cols() == out.values.cols(),
            ErrorKind::kInput, "fused kernels differ in shape");
    if (kernels.size() == 1 && weights[i] == 1.0) {
      out.values = kernels[i].values;
    } else {
      out.values += weights[i] * kernels[i].values;
    }
    out.provenance += (i ? "," : "") + kernels[i].provenance;
  }
  out.provenance += ")";
  out.normalizer = kernels.front().normalizer;
  out.l1_normalized = kernels.front().l1_normalized;
  return out;
}

// ---------------------------------------------------------------------------
// Binary C-SVC on a precomputed kernel, solved by SMO with second-order
// working-set selection; ties in the selection go to the lowest index.

struct SmoOptions {
  double tol = 1e-3;  // KKT violation gap
  long max_iter = 0;  // 0: max(10^7, 100 n)
};

struct BinarySvm {
  Eigen::VectorXd alpha;  // dual variables in [0, C]
  Eigen::VectorXd y;      // +1 / -1
  double bias = 0.0;      // decision = sum_i alpha_i y_i K(x, x_i) + bias
  long iterations = 0;

  Eigen::VectorXd coefficients() const { return alpha.cwiseProduct(y); }
};

namespace detail {

inline bool in_up(double a, double y, double c) { return (y > 0 && a < c) || (y < 0 && a > 0); }
inline bool in_low(double a, double y, double c) { return (y > 0 && a > 0) || (y < 0 && a < c); }

}  // namespace detail

/// Largest KKT violation max_{I_up} -y G - min_{I_low} -y G for a dual point.
inline double kkt_gap(const Eigen::MatrixXd& kernel, const Eigen::VectorXd& y, const Eigen::VectorXd& alpha, double c) {
  const Eigen::Index n = y.size();
  const Eigen::VectorXd q_alpha = (kernel.array() * (y * y.transpose()).array()).matrix() * alpha;
  double gmax = -std::numeric_limits<double>::infinity();
  double gmin = std::numeric_limits<double>::infinity();
  for (Eigen::Index t = 0; t < n; ++t) {
    const double v = -y[t] * (q_alpha[t] - 1.0);
    if (detail::in_up(alpha[t], y[t], c)) gmax = std::max(gmax, v);
    if (detail::in_low(alpha[t], y[t], c)) gmin = std::min(gmin, v);
  }
  return gmax - gmin;
}

inline BinarySvm train_binary_svm(const Eigen::MatrixXd& kernel, const Eigen::VectorXd& y, double c,
                                  const SmoOptions& opts = {}) {
  const Eigen::Index n = y.size();
  require(kernel.rows() == n && kernel.cols() == n, ErrorKind::kInput, "kernel size differs from label count");
  require(c > 0.0, ErrorKind::kParameter, "C must be positive");
  constexpr double kTau = 1e-12;
  const double inf = std::numeric_limits<double>::infinity();

  BinarySvm svm;
  svm.y = y;
  svm.alpha = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd& alpha = svm.alpha;
  Eigen::VectorXd grad = Eigen::VectorXd::Constant(n, -1.0);
  const long max_iter = opts.max_iter > 0 ? opts.max_iter : std::max<long>(10000000, 100 * static_cast<long>(n));

  long iter = 0;
  for (; iter < max_iter; ++iter) {
    double gmax = -inf;
    Eigen::Index i = -1;
    for (Eigen::Index t = 0; t < n; ++t) {
      if (!detail::in_up(alpha[t], y[t], c)) continue;
      const double v = -y[t] * grad[t];
      if (v > gmax) {
        gmax = v;
        i = t;
      }
    }
    double gmin = inf;
    double best = inf;
    Eigen::Index j = -1;
    for (Eigen::Index t = 0; t < n; ++t) {
      if (!detail::in_low(alpha[t], y[t], c)) continue;
      const double v = -y[t] * grad[t];
      gmin = std::min(gmin, v);
      if (i < 0) continue;
      const double b = gmax - v;
      if (b > 0.0) {
        double a = kernel(i, i) + kernel(t, t) - 2.0 * kernel(i, t);
        if (a <= 0.0) a = kTau;
        const double score = -(b * b) / a;
        if (score < best) {
          best = score;
          j = t;
        }
      }
    }
    if (i < 0 || j < 0 || gmax - gmin < opts.tol) break;

    const double old_ai = alpha[i];
    const double old_aj = alpha[j];
    const double qij = y[i] * y[j] * kernel(i, j);
    if (y[i] != y[j]) {
      double quad = kernel(i, i) + kernel(j, j) + 2.0 * qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0) {
        if (alpha[j] < 0) {
          alpha[j] = 0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = -diff;
      }
      if (diff > 0) {
        if (alpha[i] > c) {
          alpha[i] = c;
          alpha[j] = c - diff;
        }
      } else if (alpha[j] > c) {
        alpha[j] = c;
        alpha[i] = c + diff;
      }
    } else {
      double quad = kernel(i, i) + kernel(j, j) - 2.0 * qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > c) {
        if (alpha[i] > c) {
          alpha[i] = c;
          alpha[j] = sum - c;
        }
      } else if (alpha[j] < 0) {
        alpha[j] = 0;
        alpha[i] = sum;
      }
      if (sum > c) {
        if (alpha[j] > c) {
          alpha[j] = c;
          alpha[i] = sum - c;
        }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = sum;
      }
    }
    const double dai = alpha[i] - old_ai;
    const double daj = alpha[j] - old_aj;
    for (Eigen::Index t = 0; t < n; ++t)
      grad[t] += y[t] * (y[i] * kernel(t, i) * dai + y[j] * kernel(t, j) * daj);
  }
  svm.iterations = iter;

  // rho: mean of y G over free vectors, else midpoint of the feasible interval.
  double ub = inf, lb = -inf, sum_free = 0.0;
  long n_free = 0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (alpha[t] >= c) {
      if (y[t] < 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (alpha[t] <= 0) {
      if (y[t] > 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  const double rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;
  svm.bias = -rho;
  return svm;
}

struct SvmModel {
  std::vector<BinarySvm> per_class;  // one-vs-rest, indexed by class
  double c = 10.0;
  double normalizer = 0.0;  // A of the training kernel

  std::size_t classes() const { return per_class.size(); }
};

/// One binary problem per class: +1 for the class, -1 for the rest.
inline SvmModel train_ovr_svm(const KernelMatrix& train_kernel, const std::vector<std::size_t>& labels,
                              std::size_t n_classes, double c, const SmoOptions& opts = {}) {
  const auto n = static_cast<Eigen::Index>(labels.size());
  require(train_kernel.values.rows() == n && train_kernel.values.cols() == n, ErrorKind::kInput,
          "training kernel does not match label count");
  require(n_classes >= 2, ErrorKind::kClass, "one-vs-rest needs at least two classes");
  std::vector<std::size_t> counts(n_classes, 0);
  for (std::size_t l : labels) {
    require(l < n_classes, ErrorKind::kInput, "label index out of range");
    ++counts[l];
  }
  for (std::size_t k = 0; k < n_classes; ++k)
    require(counts[k] >= 1, ErrorKind::kClass, "class " + std::to_string(k) + " has no training sample");

  SvmModel model;
  model.c = c;
  model.normalizer = train_kernel.normalizer;
  for (std::size_t k = 0; k < n_classes; ++k) {
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y[i] = labels[static_cast<std::size_t>(i)] == k ? 1.0 : -1.0;
    model.per_class.push_back(train_binary_svm(train_kernel.values, y, c, opts));
  }
  return model;
}

struct Prediction {
  std::vector<std::size_t> labels;
  Eigen::MatrixXd scores;  // N_test x classes
};

inline std::vector<std::size_t> argmax_rows(const Eigen::MatrixXd& scores) {
  std::vector<std::size_t> out;
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < scores.cols(); ++k)
      if (scores(r, k) > scores(r, best)) best = k;
    out.push_back(static_cast<std::size_t>(best));
  }
  return out;
}

/// `test_train` has one row per test sample and one column per training sample.
inline Prediction predict(const SvmModel& model, const Eigen::MatrixXd& test_train) {
  require(!model.per_class.empty(), ErrorKind::kInput, "empty SVM model");
  require(test_train.cols() == model.per_class.front().alpha.size(), ErrorKind::kInput,
          "test kernel columns do not match the training set");
  Prediction p;
  p.scores.resize(test_train.rows(), static_cast<Eigen::Index>(model.classes()));
  for (std::size_t k = 0; k < model.classes(); ++k) {
    const auto& svm = model.per_class[k];
    p.scores.col(static_cast<Eigen::Index>(k)) = (test_train * svm.coefficients()).array() + svm.bias;
  }
  p.labels = argmax_rows(p.scores);
  return p;
}

// ---------------------------------------------------------------------------

struct Split {
  std::int64_t group = 0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// One split per distinct group, ascending by group id.
inline std::vector<Split> logo_splits(const std::vector<std::int64_t>& groups) {
  std::map<std::int64_t, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < groups.size(); ++i) members[groups[i]].push_back(i);
  require(members.size() >= 2, ErrorKind::kProtocol, "leave-one-group-out needs at least two groups");
  std::vector<Split> out;
  for (const auto& [g, idx] : members) {
    Split s;
    s.group = g;
    s.test = idx;
    for (std::size_t i = 0; i < groups.size(); ++i)
      if (groups[i] != g) s.train.push_back(i);
    out.push_back(std::move(s));
  }
  return out;
}

struct Metrics {
  double accuracy = 0.0;
  double macro_accuracy = 0.0;            // mean per-class accuracy over classes present in truth
  std::vector<double> per_class;          // NaN-free: classes absent from truth report 0
  std::vector<std::size_t> support;
  std::vector<std::vector<std::size_t>> confusion;  // [truth][predicted]
};

inline Metrics evaluate(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& truth,
                        std::size_t n_classes) {
  require(predicted.size() == truth.size(), ErrorKind::kInput, "predicted and truth lengths differ");
  Metrics m;
  m.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
  m.support.assign(n_classes, 0);
  m.per_class.assign(n_classes, 0.0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    require(truth[i] < n_classes && predicted[i] < n_classes, ErrorKind::kInput, "unknown label index");
    ++m.confusion[truth[i]][predicted[i]];
    ++m.support[truth[i]];
    if (truth[i] == predicted[i]) ++correct;
  }
  m.accuracy = truth.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(truth.size());
  double macro = 0.0;
  std::size_t present = 0;
  for (std::size_t k = 0; k < n_classes; ++k) {
    if (m.support[k] == 0) continue;
    m.per_class[k] = static_cast<double>(m.confusion[k][k]) / static_cast<double>(m.support[k]);
    macro += m.per_class[k];
    ++present;
  }
  m.macro_accuracy = present ? macro / static_cast<double>(present) : 0.0;
  return m;
}

inline Json metrics_to_json(const Metrics& m, const std::vector<std::string>& class_names) {
  Json per_class = Json::object();
  for (std::size_t k = 0; k < class_names.size(); ++k) per_class[class_names[k]] = m.per_class[k];
  return Json{{"accuracy", m.accuracy},
              {"macro_accuracy", m.macro_accuracy},
              {"per_class", per_class},
              {"classes", class_names},
              {"confusion", m.confusion}};
}

inline std::string confusion_csv(const Metrics& m, const std::vector<std::string>& class_names) {
  std::ostringstream out;
  out << "truth\\predicted";
  for (const auto& n : class_names) out << ',' << n;
  out << '\n';
  for (std::size_t r = 0; r < class_names.size(); ++r) {
    out << class_names[r];
    for (std::size_t c = 0; c < class_names.size(); ++c) out << ',' << m.confusion[r][c];
    out << '\n';
  }
  return out.str();
}

}  // namespace stnc::classify
