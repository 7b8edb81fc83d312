#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "stnc/stgnmf.hpp"

using namespace stnc;
using namespace stnc::stgnmf;

namespace {

Eigen::MatrixXd random_nonneg(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = u(rng);
  return m;
}

}  // namespace

TEST(HeatKernel, HandValuesAndSymmetry) {
  Eigen::MatrixXd x(2, 3);
  x << 0.0, 1.0, 0.0,
       0.0, 1.0, 0.0;  // |x1 - x0|^2 = 2, x2 == x0
  const auto hk = graph::heat_kernel_matrix(x, graph::Bandwidth::fixed(2.0));
  EXPECT_EQ(hk.weights(0, 2), 1.0);
  EXPECT_NEAR(hk.weights(0, 1), std::exp(-1.0), 1e-15);
  EXPECT_NEAR(hk.weights(0, 1), 0.367879, 1e-6);
  const Eigen::MatrixXd r = random_nonneg(5, 20, 1);
  const auto auto_hk = graph::heat_kernel_matrix(r);
  EXPECT_EQ(auto_hk.weights, auto_hk.weights.transpose());
  EXPECT_TRUE((auto_hk.weights.diagonal().array() == 1.0).all());
  EXPECT_TRUE((auto_hk.weights.array() > 0.0 && auto_hk.weights.array() <= 1.0).all());
}

TEST(HeatKernel, AutoBandwidthIsMeanPairwiseDistance) {
  Eigen::MatrixXd x(1, 3);
  x << 0.0, 1.0, 3.0;  // squared distances 1, 9, 4
  EXPECT_NEAR(graph::heat_kernel_matrix(x).delta, 14.0 / 3.0, 1e-15);
}

TEST(HeatKernel, Errors) {
  const Eigen::MatrixXd x = random_nonneg(2, 4, 2);
  try {
    graph::heat_kernel_matrix(x, graph::Bandwidth::fixed(0.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kParameter);
  }
  Eigen::MatrixXd same(2, 4);
  same.colwise() = Eigen::Vector2d(1, 1);
  try {
    graph::heat_kernel_matrix(same);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kBandwidth);
  }
}

TEST(HeatKernel, KnnUnionRuleStaysSymmetric) {
  const Eigen::MatrixXd x = random_nonneg(3, 15, 3);
  const auto hk = graph::heat_kernel_matrix(x, {}, 2);
  const auto full = graph::heat_kernel_matrix(x);
  EXPECT_EQ(hk.weights, hk.weights.transpose());
  EXPECT_TRUE((hk.weights.diagonal().array() == 1.0).all());
  for (Eigen::Index i = 0; i < 15; ++i) {
    int kept = 0;
    for (Eigen::Index j = 0; j < 15; ++j) {
      if (i == j) continue;
      if (hk.weights(i, j) != 0.0) {
        ++kept;
        EXPECT_EQ(hk.weights(i, j), full.weights(i, j));
      }
    }
    EXPECT_GE(kept, 2);
  }
}

TEST(Blend, EndpointsAndLaplacian) {
  const auto wf = graph::heat_kernel_matrix(random_nonneg(4, 8, 4)).weights;
  const auto wd = graph::heat_kernel_matrix(random_nonneg(6, 8, 5)).weights;
  EXPECT_EQ(graph::blend_graph(wf, wd, 1.0).weights, wf);
  EXPECT_EQ(graph::blend_graph(wf, wd, 0.0).weights, wd);
  const auto g = graph::blend_graph(wf, wd, 0.6);
  EXPECT_LT(g.laplacian.rowwise().sum().cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_GT(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(g.laplacian).eigenvalues().minCoeff(), -1e-9);
  EXPECT_THROW(graph::blend_graph(wf, Eigen::MatrixXd::Identity(3, 3), 0.5), Error);
  EXPECT_THROW(graph::blend_graph(wf, wd, 1.3), Error);
}

TEST(Objective, ExactFactorizationAndConstantCodes) {
  const Eigen::MatrixXd u = random_nonneg(6, 2, 6);
  const Eigen::MatrixXd v = random_nonneg(2, 5, 7);
  const auto g = graph::blend_graph(graph::heat_kernel_matrix(v).weights, graph::heat_kernel_matrix(v).weights, 0.5);
  EXPECT_EQ(objective(u * v, u, v, g.laplacian, 0.0), 0.0);
  Eigen::MatrixXd same(2, 5);
  same.colwise() = Eigen::Vector2d(0.3, 0.9);
  EXPECT_NEAR(objective(u * same, u, same, g.laplacian, 5.0), 0.0, 1e-12);
}

TEST(Objective, TraceFormMatchesPairwiseSum) {
  const Eigen::MatrixXd y = random_nonneg(6, 5, 8);
  const Eigen::MatrixXd u = random_nonneg(6, 2, 9);
  const Eigen::MatrixXd v = random_nonneg(2, 5, 10);
  const auto g = graph::blend_graph(graph::heat_kernel_matrix(y).weights,
                                    graph::heat_kernel_matrix(random_nonneg(4, 5, 11)).weights, 0.4);
  EXPECT_NEAR(objective(y, u, v, g.laplacian, 0.7), oracle::pairwise_objective(y, u, v, g.weights, 0.7), 1e-9);
}

TEST(Updates, MatchElementwiseOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Eigen::MatrixXd y = random_nonneg(5, 4, 100 + seed);
    const Eigen::MatrixXd u0 = random_nonneg(5, 2, 200 + seed);
    const Eigen::MatrixXd v0 = random_nonneg(2, 4, 300 + seed);
    const auto g = graph::blend_graph(graph::heat_kernel_matrix(y).weights,
                                      graph::heat_kernel_matrix(random_nonneg(3, 4, seed)).weights, 0.5);
    Eigen::MatrixXd u = u0;
    update_u(y, u, v0, kDefaultEps);
    EXPECT_LT((u - oracle::loop_update_u(y, u0, v0, kDefaultEps)).cwiseAbs().maxCoeff(), 1e-12);
    Eigen::MatrixXd v = v0;
    update_v(y, u0, v, g.weights, g.degree, 0.8, kDefaultEps);
    EXPECT_LT((v - oracle::loop_update_v(y, u0, v0, g.weights, 0.8, kDefaultEps)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Train, PlainNmfRecoversExactProduct) {
  // Convergence speed of the plain updates is instance dependent; this is the
  // first instance of the seeded sequence, not a selected one.
  std::mt19937_64 rng(0);
  const Eigen::MatrixXd u_true = random_uniform(8, 3, rng);
  const Eigen::MatrixXd v_true = random_uniform(3, 10, rng);
  const Eigen::MatrixXd y = u_true * v_true;
  TrainOptions opts;
  opts.seed = 0;
  opts.tol = 0.0;
  opts.max_iter = 500;
  const auto res = train(y, random_nonneg(4, 10, 23), 3, 0.0, 0.6, opts);
  EXPECT_LT(res.report.final_objective(), 1e-6);
}

TEST(Train, ExactFactorsAreFixedPoint) {
  const Eigen::MatrixXd u_true = random_nonneg(8, 3, 31);
  const Eigen::MatrixXd v_true = random_nonneg(3, 10, 32);
  const Eigen::MatrixXd y = u_true * v_true;
  const auto g = graph::graph_from_weights(graph::heat_kernel_matrix(y).weights);
  TrainOptions opts;
  opts.max_iter = 5;
  opts.tol = 0.0;
  opts.normalize_export = false;
  const auto res = train_from(y, g, u_true, v_true, 0.0, opts);
  EXPECT_LT((res.model.u - u_true).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((res.v - v_true).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Train, ObjectiveMonotoneAndFactorsNonNegative) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Eigen::MatrixXd y = random_nonneg(30, 20, 400 + seed);
    const Eigen::MatrixXd z = random_nonneg(12, 20, 500 + seed);
    TrainOptions opts;
    opts.seed = seed;
    opts.tol = 0.0;
    opts.max_iter = 100;
    bool nonneg = true;
    opts.observer = [&](Step, const Eigen::MatrixXd& u, const Eigen::MatrixXd& v) {
      nonneg = nonneg && (u.array() >= 0.0).all() && (v.array() >= 0.0).all();
    };
    const double lambda = (seed % 3) * 0.5;
    const double beta = (seed % 4) / 3.0;
    const auto res = train(y, z, 4, lambda, beta, opts);
    const auto& t = res.report.objective_trace;
    for (std::size_t i = 1; i < t.size(); ++i) EXPECT_LE(t[i], t[i - 1] * (1.0 + 1e-10)) << "seed " << seed;
    EXPECT_TRUE(nonneg);
  }
}

TEST(Train, ExportNormalizesColumnsKeepingProduct) {
  const Eigen::MatrixXd y = random_nonneg(10, 12, 41);
  TrainOptions opts;
  opts.max_iter = 50;
  opts.normalize_export = false;
  const auto raw = train(y, random_nonneg(5, 12, 42), 3, 0.3, 0.5, opts);
  opts.normalize_export = true;
  const auto norm = train(y, random_nonneg(5, 12, 42), 3, 0.3, 0.5, opts);
  for (Eigen::Index k = 0; k < 3; ++k) EXPECT_NEAR(norm.model.u.col(k).norm(), 1.0, 1e-12);
  EXPECT_LT((raw.model.u * raw.v - norm.model.u * norm.v).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Train, BetaOneMatchesFeatureGraphOnly) {
  const Eigen::MatrixXd y = random_nonneg(15, 12, 51);
  const Eigen::MatrixXd z = random_nonneg(7, 12, 52);
  TrainOptions opts;
  opts.seed = 9;
  const auto blended = train(y, z, 4, 0.5, 1.0, opts);
  const auto wf = graph::heat_kernel_matrix(y);
  const auto gnmf = train_with_graph(y, graph::graph_from_weights(wf.weights), 4, 0.5, opts);
  EXPECT_EQ(blended.model.u, gnmf.model.u);
  EXPECT_EQ(blended.v, gnmf.v);
  EXPECT_EQ(blended.report.objective_trace, gnmf.report.objective_trace);
}

TEST(Train, InputErrors) {
  Eigen::MatrixXd y = random_nonneg(6, 8, 61);
  const Eigen::MatrixXd z = random_nonneg(3, 8, 62);
  y(0, 0) = -0.1;
  try {
    train(y, z, 2, 0.1, 0.5, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDomain);
  }
  y(0, 0) = 0.1;
  try {
    train(y, z, 6, 0.1, 0.5, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kParameter);
  }
  EXPECT_THROW(train(y, z, 0, 0.1, 0.5, {}), Error);
}

TEST(EncodeTest, DuplicateOfTrainingSampleMatchesNnlsOracle) {
  const Eigen::MatrixXd y = random_nonneg(12, 15, 71);
  const Eigen::MatrixXd z = random_nonneg(6, 15, 72);
  const auto model = train(y, z, 4, 0.0, 0.6, {});
  EncodeOptions opts;
  opts.max_iter = 20000;
  opts.tol = 0.0;
  for (Eigen::Index j : {0, 7}) {
    const auto enc = encode_test(model.model, model.v, y.col(j), z.col(j), y, z, 0.0, 0.6, opts);
    const Eigen::VectorXd ref = oracle::nnls_projected_gradient(model.model.u, y.col(j));
    const double err = (y.col(j) - model.model.u * enc.v.col(0)).squaredNorm();
    const double ref_err = (y.col(j) - model.model.u * ref).squaredNorm();
    EXPECT_NEAR(err, ref_err, 1e-6);
  }
}

TEST(EncodeTest, ConstructedConeMemberIsReconstructed) {
  const Eigen::MatrixXd u = random_nonneg(10, 3, 81);
  const ComponentModel model{u};
  const Eigen::MatrixXd v_star = random_nonneg(3, 2, 82);
  const Eigen::MatrixXd y_train = random_nonneg(10, 5, 83);
  const Eigen::MatrixXd z_train = random_nonneg(4, 5, 84);
  EncodeOptions opts;
  opts.max_iter = 20000;
  opts.tol = 0.0;
  const auto enc = encode_test(model, random_nonneg(3, 5, 85), u * v_star, random_nonneg(4, 2, 86), y_train, z_train,
                               0.0, 0.6, opts);
  EXPECT_LT((u * v_star - u * enc.v).squaredNorm(), 1e-6);
  EXPECT_TRUE((enc.v.array() >= 0.0).all());
}

TEST(EncodeTest, ZeroColumnIsDegenerate) {
  const ComponentModel model{random_nonneg(6, 2, 91)};
  Eigen::MatrixXd yt = random_nonneg(6, 2, 92);
  yt.col(1).setZero();
  const auto enc = encode_test(model, random_nonneg(2, 4, 93), yt, random_nonneg(3, 2, 94), random_nonneg(6, 4, 95),
                               random_nonneg(3, 4, 96), 0.0, 0.5, {});
  EXPECT_FALSE(enc.degenerate[0]);
  EXPECT_TRUE(enc.degenerate[1]);
  EXPECT_LT(enc.v.col(1).maxCoeff(), 1e-9);
}

TEST(EncodeTest, FrozenInputsMonotoneAndNonNegative) {
  const Eigen::MatrixXd y = random_nonneg(20, 16, 101);
  const Eigen::MatrixXd z = random_nonneg(9, 16, 102);
  const auto trained = train(y, z, 4, 0.5, 0.6, {});
  const ComponentModel model = trained.model;
  const Eigen::MatrixXd v_train = trained.v;
  const std::string before = io::Hasher().matrix(model.u).matrix(v_train).hex();
  EncodeOptions opts;
  opts.feature_delta = trained.report.feature_delta;
  opts.distribution_delta = trained.report.distribution_delta;
  opts.tol = 0.0;
  opts.max_iter = 200;
  bool nonneg = true;
  opts.observer = [&](const Eigen::MatrixXd& v) { nonneg = nonneg && (v.array() >= 0.0).all(); };
  for (bool strict : {false, true}) {
    opts.strict_test_block = strict;
    const auto enc = encode_test(model, v_train, random_nonneg(20, 5, 103), random_nonneg(9, 5, 104), y, z, 0.5, 0.6, opts);
    for (std::size_t i = 1; i < enc.objective_trace.size(); ++i)
      EXPECT_LE(enc.objective_trace[i], enc.objective_trace[i - 1] * (1.0 + 1e-10));
  }
  EXPECT_TRUE(nonneg);
  EXPECT_EQ(io::Hasher().matrix(model.u).matrix(v_train).hex(), before);
}

TEST(EncodeTest, DimensionMismatchIsInputError) {
  const ComponentModel model{random_nonneg(6, 2, 111)};
  try {
    encode_test(model, random_nonneg(2, 4, 1), random_nonneg(6, 2, 2), random_nonneg(5, 2, 3), random_nonneg(6, 4, 4),
                random_nonneg(3, 4, 5), 0.1, 0.5, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInput);
  }
}

TEST(Pseudoinverse, RecoversConeMember) {
  const Eigen::MatrixXd u = random_nonneg(8, 3, 121);
  const Eigen::Vector3d v_star(0.2, 1.5, 0.7);
  const Eigen::MatrixXd v = pseudoinverse_encode({u}, u * v_star);
  EXPECT_LT((v.col(0) - v_star).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Pseudoinverse, NegativeCoefficientsOutsideTheCone) {
  int negative_trials = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Eigen::MatrixXd u = random_nonneg(8, 3, 130 + seed);
    const Eigen::MatrixXd y = random_nonneg(8, 1, 160 + seed);
    const Eigen::MatrixXd v = pseudoinverse_encode({u}, y);
    if ((v.array() < 0.0).any()) ++negative_trials;
    // The unconstrained optimum is never worse than the non-negative one.
    const Eigen::VectorXd nn = oracle::nnls_projected_gradient(u, y.col(0), 20000);
    EXPECT_LE((y - u * v).squaredNorm(), (y.col(0) - u * nn).squaredNorm() + 1e-12);
  }
  EXPECT_GE(negative_trials, 1);
}

TEST(Persistence, ModelRoundTrip) {
  const auto res = train(random_nonneg(10, 12, 141), random_nonneg(4, 12, 142), 3, 0.2, 0.6, {});
  const auto dir = std::filesystem::temp_directory_path() / "stnc_model_rt";
  std::filesystem::create_directories(dir);
  save_model(res, dir);
  const auto loaded = load_model(dir);
  EXPECT_EQ(loaded.model.u, res.model.u);
  EXPECT_EQ(loaded.v, res.v);
  EXPECT_EQ(loaded.report.objective_trace, res.report.objective_trace);
  EXPECT_EQ(loaded.report.feature_delta, res.report.feature_delta);
}
