// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "oracles.hpp"
#include "stnc/pipeline.hpp"

using namespace stnc;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Eigen::MatrixXd uniform(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  return stgnmf::random_uniform(r, c, rng);
}

bool non_negative(const Eigen::MatrixXd& m) { return (m.array() >= 0.0).all(); }

// ---------------------------------------------------------------------------
// 1, 2: monotone objective and non-negative factors on random instances

struct SuiteResult {
  double worst_rise = 0.0;  // largest relative increase seen
  std::size_t runs = 0;
  std::size_t negative_checks = 0;
  std::size_t checks = 0;
  double seconds = 0.0;
};

const SuiteResult& factorization_suite() {
  static const SuiteResult result = [] {
    SuiteResult r;
    const auto t0 = Clock::now();
    for (std::uint64_t inst = 0; inst < 20; ++inst) {
      std::mt19937_64 rng(1000 + inst);
      const Eigen::MatrixXd y = uniform(100, 50, rng);
      const Eigen::MatrixXd z = uniform(30, 50, rng);
      const Eigen::MatrixXd yt = uniform(100, 8, rng);
      const Eigen::MatrixXd zt = uniform(30, 8, rng);
      for (double lambda : {0.0, 0.1, 1.0}) {
        for (double beta : {0.0, 0.5, 1.0}) {
          stgnmf::TrainOptions o;
          o.seed = inst;
          o.tol = 0.0;
          o.max_iter = 200;
          o.observer = [&](stgnmf::Step, const Eigen::MatrixXd& u, const Eigen::MatrixXd& v) {
            r.checks += 2;
            r.negative_checks += !non_negative(u) + !non_negative(v);
          };
          const auto res = stgnmf::train(y, z, 10, lambda, beta, o);
          const auto& tr = res.report.objective_trace;
          for (std::size_t i = 1; i < tr.size(); ++i)
            r.worst_rise = std::max(r.worst_rise, (tr[i] - tr[i - 1]) / std::abs(tr[i - 1]));
          r.checks += 2;
          r.negative_checks += !non_negative(res.model.u) + !non_negative(res.v);

          stgnmf::EncodeOptions eo;
          eo.seed = inst;
          eo.tol = 0.0;
          eo.max_iter = 50;
          eo.feature_delta = res.report.feature_delta;
          eo.distribution_delta = res.report.distribution_delta;
          eo.observer = [&](const Eigen::MatrixXd& vt) {
            ++r.checks;
            r.negative_checks += !non_negative(vt);
          };
          const auto enc = stgnmf::encode_test(res.model, res.v, yt, zt, y, z, lambda, beta, eo);
          ++r.checks;
          r.negative_checks += !non_negative(enc.v);
          ++r.runs;
        }
      }
    }
    r.seconds = seconds_since(t0);
    return r;
  }();
  return result;
}

Outcome monotonicity() {
  const auto& r = factorization_suite();
  const bool ok = r.worst_rise <= 1e-10 && r.seconds < 60.0;
  return {ok, fmt("%zu runs x 200 iterations, worst relative rise %.3g (slack 1e-10), %.1f s", r.runs,
                  std::max(r.worst_rise, 0.0), r.seconds)};
}

Outcome non_negativity() {
  const auto& r = factorization_suite();
  return {r.negative_checks == 0 && r.checks > 0,
          fmt("%zu negative matrices in %zu post-update checks of U, V and V_t", r.negative_checks, r.checks)};
}

// 3: beta = 1 equals plain GNMF on the feature graph
Outcome degeneracy() {
  std::size_t identical = 0, total = 0;
  for (std::uint64_t inst = 0; inst < 5; ++inst) {
    std::mt19937_64 rng(2000 + inst);
    const Eigen::MatrixXd y = uniform(40, 30, rng);
    const Eigen::MatrixXd z = uniform(60, 30, rng);
    for (std::optional<Eigen::Index> knn : {std::optional<Eigen::Index>{}, std::optional<Eigen::Index>{5}}) {
      stgnmf::TrainOptions o;
      o.seed = 77 + inst;
      o.knn = knn;
      const auto blended = stgnmf::train(y, z, 6, 0.5, 1.0, o);
      const auto wf = graph::heat_kernel_matrix(y, {}, knn);
      const auto gnmf = stgnmf::train_with_graph(y, graph::graph_from_weights(wf.weights), 6, 0.5, o);
      identical += blended.model.u == gnmf.model.u && blended.v == gnmf.v &&
                   blended.report.objective_trace == gnmf.report.objective_trace;
      ++total;
    }
  }
  return {identical == total, fmt("%zu/%zu runs bit-identical (dense and 5-NN graphs)", identical, total)};
}

// 4: trace form vs pairwise double sum
Outcome objective_form() {
  double worst = 0.0;
  for (std::uint64_t inst = 0; inst < 10; ++inst) {
    std::mt19937_64 rng(3000 + inst);
    const Eigen::MatrixXd y = uniform(9, 12, rng);
    const Eigen::MatrixXd u = uniform(9, 4, rng);
    const Eigen::MatrixXd v = uniform(4, 12, rng);
    const Eigen::MatrixXd z = uniform(5, 12, rng);
    const auto g = graph::blend_graph(graph::heat_kernel_matrix(y).weights, graph::heat_kernel_matrix(z).weights, 0.6);
    for (double lambda : {0.0, 0.3, 2.0}) {
      const double a = stgnmf::objective(y, u, v, g.laplacian, lambda);
      const double b = oracle::pairwise_objective(y, u, v, g.weights, lambda);
      worst = std::max(worst, std::abs(a - b) / std::max(1.0, std::abs(b)));
    }
  }
  return {worst <= 1e-9, fmt("10 instances, N=12, worst relative difference %.3g (tol 1e-9)", worst)};
}

// 5: one update step vs elementwise loops
Outcome update_oracle() {
  double worst = 0.0;
  for (std::uint64_t inst = 0; inst < 10; ++inst) {
    std::mt19937_64 rng(4000 + inst);
    const Eigen::MatrixXd y = uniform(5, 4, rng);
    const Eigen::MatrixXd u0 = uniform(5, 2, rng);
    const Eigen::MatrixXd v0 = uniform(2, 4, rng);
    const auto g = graph::graph_from_weights(graph::heat_kernel_matrix(uniform(3, 4, rng)).weights);
    const double lambda = 0.5;
    Eigen::MatrixXd u = u0, v = v0;
    stgnmf::update_u(y, u, v0, stgnmf::kDefaultEps);
    stgnmf::update_v(y, u0, v, g.weights, g.degree, lambda, stgnmf::kDefaultEps);
    worst = std::max(worst, (u - oracle::loop_update_u(y, u0, v0, stgnmf::kDefaultEps)).cwiseAbs().maxCoeff());
    worst = std::max(worst,
                     (v - oracle::loop_update_v(y, u0, v0, g.weights, lambda, stgnmf::kDefaultEps)).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-12, fmt("10 instances 5x4, worst entry difference %.3g (tol 1e-12)", worst)};
}

// 6: exact factorization, first seeded instance
Outcome exact_factorization() {
  std::mt19937_64 rng(0);
  const Eigen::MatrixXd u_true = uniform(8, 3, rng);
  const Eigen::MatrixXd v_true = uniform(3, 10, rng);
  const Eigen::MatrixXd y = u_true * v_true;
  stgnmf::TrainOptions o;
  o.seed = 0;
  o.tol = 0.0;
  o.max_iter = 500;
  const auto res = stgnmf::train_with_graph(y, graph::graph_from_weights(Eigen::MatrixXd::Zero(10, 10)), 3, 0.0, o);
  const double f = res.report.objective_trace.back();
  return {f < 1e-6, fmt("M=8 N=10 K_c=3, objective after %d iterations %.3g (< 1e-6)", res.report.iterations, f)};
}

// 7: Fisher vector vanishes at the fitted maximum-likelihood GMM
Outcome fv_zero_gradient() {
  const auto t0 = Clock::now();
  constexpr int kWords = 5, kSamples = 20, kPerSet = 100;  // 10k locations
  std::mt19937_64 rng(5000);
  std::uniform_real_distribution<double> unit(0.0, 1.0), weight(0.2, 1.0);
  std::normal_distribution<double> noise(0.0, 0.06);
  std::vector<std::vector<Eigen::Vector3d>> blobs(kWords);
  for (auto& b : blobs)
    for (int g = 0; g < 3; ++g) b.push_back({0.2 + 0.6 * unit(rng), 0.2 + 0.6 * unit(rng), 0.2 + 0.6 * unit(rng)});
  std::vector<std::vector<bovw::WordLocationSet>> corpus(kSamples, std::vector<bovw::WordLocationSet>(kWords));
  std::vector<bovw::WordLocationSet> pooled(kWords);
  for (auto& sample : corpus)
    for (int k = 0; k < kWords; ++k)
      for (int i = 0; i < kPerSet; ++i) {
        const auto& c = blobs[static_cast<std::size_t>(k)][rng() % 3];
        const Eigen::Vector3d l(c[0] + noise(rng), c[1] + noise(rng), c[2] + noise(rng));
        const double w = weight(rng);
        sample[static_cast<std::size_t>(k)].add(l, w);
        pooled[static_cast<std::size_t>(k)].add(l, w);
      }
  stdv::LocationModelOptions lo;
  lo.components = 3;
  lo.min_count = 10.0;
  const auto model = stdv::fit_location_gmms(corpus, kWords, 17, lo);
  double sq = 0.0;
  int populated = 0;
  for (int k = 0; k < kWords; ++k) {
    if (model.uses_shared[static_cast<std::size_t>(k)]) continue;
    sq += stdv::fisher_vector_weighted(model.for_word(k), pooled[static_cast<std::size_t>(k)]).squaredNorm();
    ++populated;
  }
  const double norm = std::sqrt(sq);
  const double secs = seconds_since(t0);
  return {norm < 1e-2 && populated == kWords && secs < 30.0,
          fmt("G=3, 10000 weighted locations, %d words, aggregate FV norm %.3g (< 1e-2), %.1f s", populated, norm,
              secs)};
}

stdv::DiagGmm random_gmm(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  stdv::DiagGmm g;
  g.priors = Eigen::Vector3d(0.2, 0.3, 0.5);
  g.means = Eigen::MatrixXd(3, 3);
  g.sigmas = Eigen::MatrixXd(3, 3);
  for (Eigen::Index c = 0; c < 3; ++c)
    for (Eigen::Index a = 0; a < 3; ++a) {
      g.means(a, c) = u(rng);
      g.sigmas(a, c) = 0.05 + 0.2 * u(rng);
    }
  return g;
}

// 8: weight homogeneity
Outcome fv_homogeneity() {
  std::mt19937_64 rng(6000);
  std::uniform_real_distribution<double> u(0.0, 1.0), w(0.05, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = random_gmm(rng);
    bovw::WordLocationSet s;
    for (int i = 0; i < 40; ++i) s.add({u(rng), u(rng), u(rng)}, w(rng));
    const Eigen::VectorXd base = stdv::fisher_vector_weighted(g, s);
    for (double c : {0.1, 7.0}) {
      auto scaled = s;
      for (double& x : scaled.weights) x *= c;
      worst = std::max(worst, (stdv::fisher_vector_weighted(g, scaled) - base).cwiseAbs().maxCoeff());
    }
  }
  return {worst < 1e-12, fmt("20 sets, c in {0.1, 7}, worst entry change %.3g (< 1e-12)", worst)};
}

// 9: unit weights reduce to the plain Fisher vector
Outcome hard_assignment() {
  std::mt19937_64 rng(7000);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = random_gmm(rng);
    bovw::WordLocationSet s;
    std::vector<std::vector<double>> pts;
    for (int i = 0; i < 30; ++i) {
      const Eigen::Vector3d l(u(rng), u(rng), u(rng));
      s.add(l, 1.0);
      pts.push_back({l[0], l[1], l[2]});
    }
    std::vector<oracle::PlainGaussian> comps;
    for (Eigen::Index c = 0; c < 3; ++c)
      comps.push_back({g.priors[c],
                       {g.means(0, c), g.means(1, c), g.means(2, c)},
                       {g.sigmas(0, c), g.sigmas(1, c), g.sigmas(2, c)}});
    const auto ref = oracle::direct_fisher_vector(comps, pts);
    const Eigen::VectorXd x = stdv::fisher_vector_weighted(g, s);
    for (std::size_t i = 0; i < ref.size(); ++i)
      worst = std::max(worst, std::abs(x[static_cast<Eigen::Index>(i)] - ref[i]));
  }
  return {worst < 1e-12, fmt("20 sets of 30 unit-weight locations, worst difference %.3g (< 1e-12)", worst)};
}

// 10: chi2 kernel
Outcome kernel() {
  std::mt19937_64 rng(8000);
  Eigen::MatrixXd v = uniform(16, 50, rng);
  for (Eigen::Index j = 0; j < v.cols(); ++j) v.col(j) /= v.col(j).sum();
  const auto k = classify::chi2_kernel_matrix(v, v, classify::mean_train_distance(v));
  const bool unit_diag = (k.values.diagonal().array() == 1.0).all();
  const bool symmetric = k.values == k.values.transpose();
  const double ratio = oracle::min_over_max_eigen(k.values);
  const Eigen::Vector2d e1(1.0, 0.0), e2(0.0, 1.0);
  const bool hand = classify::chi2_distance(e1, e2) == 1.0 && classify::chi2_distance(e1, e1) == 0.0 &&
                    classify::chi2_distance(Eigen::Vector2d(0.5, 0.5), e1) == 0.5 * (0.25 / 1.5 + 0.25 / 0.5);
  return {unit_diag && symmetric && ratio >= -1e-8 && hand,
          fmt("50 columns: unit diagonal %s, symmetric %s, min/max eigenvalue %.3g, hand cases %s",
              unit_diag ? "yes" : "no", symmetric ? "yes" : "no", ratio, hand ? "exact" : "wrong")};
}

// 11: SVM on a separable toy kernel
Outcome svm() {
  std::mt19937_64 rng(9000);
  std::uniform_real_distribution<double> noise(0.0, 0.05);
  std::vector<std::size_t> labels;
  Eigen::MatrixXd v(6, 30);
  for (Eigen::Index i = 0; i < 30; ++i) {
    const std::size_t c = static_cast<std::size_t>(i % 3);
    labels.push_back(c);
    for (Eigen::Index a = 0; a < 6; ++a) v(a, i) = noise(rng) + (a / 2 == static_cast<Eigen::Index>(c) ? 1.0 : 0.0);
  }
  const auto k = classify::chi2_kernel_matrix(v, v, classify::mean_train_distance(v));
  const double c = 10.0;
  const auto model = classify::train_ovr_svm(k, labels, 3, c);
  const auto pred = classify::predict(model, k.values);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += pred.labels[i] == labels[i];
  double equality = 0.0, box = 0.0, gap = 0.0;
  for (const auto& b : model.per_class) {
    equality = std::max(equality, std::abs(b.alpha.dot(b.y)));
    box = std::max({box, -b.alpha.minCoeff(), b.alpha.maxCoeff() - c});
    gap = std::max(gap, classify::kkt_gap(k.values, b.y, b.alpha, c));
  }
  const bool ok = correct == labels.size() && equality <= 1e-6 && box <= 1e-6;
  return {ok, fmt("training accuracy %zu/%zu, |sum alpha y| %.3g, box violation %.3g, KKT gap %.3g", correct,
                  labels.size(), equality, std::max(box, 0.0), gap)};
}

// 12: beta sweep on the location-discriminative dataset
struct BetaSweep {
  std::vector<double> betas;
  std::vector<double> mean_macro;
  double seconds = 0;
};

BetaSweep beta_sweep(const fs::path& config, const fs::path& work) {
  BetaSweep s;
  s.betas = {0.0, 0.25, 0.5, 0.6, 0.75, 1.0};
  s.mean_macro.assign(s.betas.size(), 0.0);
  const auto t0 = Clock::now();
  const pipeline::PipelineConfig base = pipeline::load_config(config);
  constexpr int kSeeds = 5;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    pipeline::PipelineConfig c = base;
    c.override_seed(static_cast<std::uint64_t>(seed));
    const fs::path out = work / ("seed_" + std::to_string(seed));
    fs::remove_all(out);
    const auto rows = pipeline::sweep(c, "beta", s.betas, out);
    for (std::size_t i = 0; i < rows.size(); ++i) s.mean_macro[i] += rows[i].macro_accuracy / kSeeds;
  }
  s.seconds = seconds_since(t0);
  return s;
}

Outcome judge_sweep(const BetaSweep& s, bool timed) {
  auto at = [&](double b) {
    for (std::size_t i = 0; i < s.betas.size(); ++i)
      if (s.betas[i] == b) return s.mean_macro[i];
    return -1.0;
  };
  // peak over the grid {0, .25, .5, .75, 1}
  const std::vector<double> grid{0.0, 0.25, 0.5, 0.75, 1.0};
  double best = -1.0, best_beta = -1.0;
  for (double b : grid)
    if (at(b) > best) {
      best = at(b);
      best_beta = b;
    }
  const bool interior = at(0.0) < best && at(1.0) < best;
  const double margin = at(0.6) - at(1.0);
  std::ostringstream curve;
  for (std::size_t i = 0; i < s.betas.size(); ++i)
    curve << (i ? " " : "") << s.betas[i] << ":" << fmt("%.3f", s.mean_macro[i]);
  const bool ok = margin >= 0.10 && interior && (!timed || s.seconds < 300.0);
  return {ok, fmt("mean macro accuracy over 5 seeds [%s]; beta 0.6 - beta 1 = %+.1f pp (>= 10); grid peak at %g "
                  "(%s); %.0f s",
                  curve.str().c_str(), 100.0 * margin, best_beta, interior ? "interior" : "endpoint", s.seconds)};
}

// 13: pseudoinverse encoding leaves the non-negative cone
Outcome pseudoinverse_negativity() {
  int with_negative = 0;
  for (std::uint64_t inst = 0; inst < 20; ++inst) {
    std::mt19937_64 rng(10000 + inst);
    const Eigen::MatrixXd y = uniform(20, 30, rng);
    stgnmf::TrainOptions o;
    o.seed = inst;
    o.max_iter = 100;
    const auto res = stgnmf::train(y, uniform(10, 30, rng), 5, 0.1, 0.6, o);
    const Eigen::MatrixXd vt = stgnmf::pseudoinverse_encode(res.model, uniform(20, 10, rng));
    with_negative += (vt.array() < 0.0).any();
  }
  return {with_negative >= 1, fmt("%d/20 instances produced negative coefficients", with_negative)};
}

// 14: leave-one-group-out partition and byte-identical reruns
Json protocol_config() {
  return Json::parse(R"({
    "version": 1,
    "seed": 5,
    "dataset": {"synth": {
      "samples_per_class": 8, "features_per_sample": 80, "descriptor_dim": 8, "descriptor_clusters": 4,
      "descriptor_spread": 0.3, "sample_jitter": 0.02, "groups": 4,
      "location_profiles": [{"spread": 0.08}, {"spread": 0.08}],
      "classes": [{"name": "a", "location_profile": 0}, {"name": "b", "location_profile": 1}]
    }},
    "codebook": {"words": 8, "k_nn": 3},
    "stdv": {"components": 2, "min_count": 5},
    "stgnmf": {"components": 4, "lambda": 0.01, "knn": 5},
    "protocol": {"kind": "logo"}
  })");
}

Outcome protocol(const fs::path& work) {
  std::mt19937_64 rng(11000);
  std::vector<std::int64_t> groups;
  for (int i = 0; i < 57; ++i) groups.push_back(static_cast<std::int64_t>(rng() % 6) * 3 - 4);
  const auto splits = classify::logo_splits(groups);
  std::vector<int> tested(groups.size(), 0);
  bool exact = splits.size() == std::set<std::int64_t>(groups.begin(), groups.end()).size();
  for (const auto& s : splits) {
    exact = exact && s.train.size() + s.test.size() == groups.size();
    for (std::size_t i : s.test) {
      ++tested[i];
      exact = exact && groups[i] == s.group;
    }
    for (std::size_t i : s.train) exact = exact && groups[i] != s.group;
  }
  for (int t : tested) exact = exact && t == 1;

  const auto cfg = pipeline::config_from_json(protocol_config());
  const fs::path a = work / "run_a", b = work / "run_b";
  fs::remove_all(a);
  fs::remove_all(b);
  const auto ra = pipeline::run_pipeline(cfg, a);
  pipeline::run_pipeline(cfg, b);
  const bool identical = io::read_text(a / "metrics.json") == io::read_text(b / "metrics.json");
  const std::size_t folds = ra.metrics.at("folds").size();
  return {exact && identical && folds == 4,
          fmt("%zu groups partition 57 samples exactly: %s; %zu-fold pipeline reruns byte-identical metrics: %s",
              splits.size(), exact ? "yes" : "no", folds, identical ? "yes" : "no")};
}

// 15: spatio-temporal pyramid layout
Outcome stp_shape() {
  std::mt19937_64 rng(12000);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  bool lengths = true;
  for (Eigen::Index words : {1, 7, 64}) {
    const bovw::Codebook cb{Eigen::MatrixXd::Random(words, 4)};
    VideoSample s;
    std::vector<bovw::SoftAssignment> as;
    for (int i = 0; i < 300; ++i) {
      const Eigen::VectorXd d = Eigen::VectorXd::Random(4);
      s.features.push_back({{u(rng), u(rng), u(rng)}, d});
      as.push_back(bovw::assign_soft(cb, d, std::min<Eigen::Index>(3, words), 2.0));
    }
    const Eigen::VectorXd raw = bovw::stp_pool(s, as, words, {}, false);
    lengths = lengths && raw.size() == 15 * words && bovw::stp_pool(s, as, words).size() == 15 * words;
    Eigen::VectorXd grid = Eigen::VectorXd::Zero(words);
    for (int c = 1; c <= 4; ++c) grid += raw.segment(c * words, words);
    worst = std::max(worst, (raw.head(words) - grid).cwiseAbs().maxCoeff());
  }
  return {lengths && worst <= 1e-12,
          fmt("length 15*K_w for K_w in {1, 7, 64}: %s; 2x2 cells vs 1x1 cell worst difference %.3g (tol 1e-12)",
              lengths ? "yes" : "no", worst)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string work = (fs::temp_directory_path() / "stnc_acceptance").string();
  std::string config_dir = std::string(STNC_SOURCE_DIR) + "/configs";
  app.add_option("--work-dir", work, "scratch directory for pipeline runs");
  app.add_option("--config-dir", config_dir, "directory holding location_discriminative.json");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& check) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s [%2d] %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "monotonicity", monotonicity);
  report(2, "non-negativity", non_negativity);
  report(3, "beta=1 degeneracy", degeneracy);
  report(4, "objective form equivalence", objective_form);
  report(5, "update step oracle", update_oracle);
  report(6, "exact factorization", exact_factorization);
  report(7, "FV zero gradient at MLE", fv_zero_gradient);
  report(8, "FV weight homogeneity", fv_homogeneity);
  report(9, "hard-assignment reduction", hard_assignment);
  report(10, "chi2 kernel", kernel);
  report(11, "SVM sanity", svm);
  report(12, "directional beta experiment", [&] {
    return judge_sweep(beta_sweep(fs::path(config_dir) / "location_discriminative.json", fs::path(work) / "beta"),
                       true);
  });
  report(13, "pseudoinverse negativity", pseudoinverse_negativity);
  report(14, "protocol correctness", [&] { return protocol(fs::path(work) / "protocol"); });
  report(15, "STP shape", stp_shape);

  // Not a criterion: the same sweep on a dataset where one class pair differs
  // only in descriptors and another only in locations.
  const fs::path complementary = fs::path(config_dir) / "location_complementary.json";
  if (fs::exists(complementary)) {
    try {
      const Outcome o = judge_sweep(beta_sweep(complementary, fs::path(work) / "beta_complementary"), false);
      std::printf("INFO      complementary dataset, same thresholds (%s): %s\n", o.pass ? "met" : "not met",
                  o.detail.c_str());
    } catch (const std::exception& e) {
      std::printf("INFO      complementary dataset: error: %s\n", e.what());
    }
  }

  std::printf("%d of 15 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
