#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rpbart/errors.hpp"
#include "rpbart/mixing.hpp"
#include "rpbart/model.hpp"
#include "stats.hpp"

using namespace rpbart;

namespace {

ModelOutputGrid unit_cell() {
  ModelOutputGrid g;
  g.id = "cell";
  g.axes = {std::vector<double>{0.0, 1.0}, std::vector<double>{0.0, 1.0}};
  g.values = Eigen::MatrixXd(2, 2);
  g.values << 0.0, 0.0, 0.0, 4.0;  // (1,1) carries 4
  return g;
}

RowMatrix points(std::initializer_list<std::pair<double, double>> pts) {
  RowMatrix P(static_cast<Eigen::Index>(pts.size()), 2);
  Eigen::Index i = 0;
  for (const auto& [a, b] : pts) {
    P(i, 0) = a;
    P(i, 1) = b;
    ++i;
  }
  return P;
}

PosteriorDraw as_draw(const EnsembleState& s) {
  PosteriorDraw d;
  for (const auto& t : s.trees) d.trees.push_back({t.tree, t.leaves, t.gamma});
  d.sigma2 = s.sigma2;
  return d;
}

}  // namespace

TEST(Regrid, CellCentreAndInteriorPoint) {
  const auto v = bilinear_regrid(unit_cell(), points({{0.5, 0.5}, {0.25, 0.75}}));
  EXPECT_DOUBLE_EQ(v(0), 1.0);
  EXPECT_DOUBLE_EQ(v(1), 0.75);
}

TEST(Regrid, ExactAtNodes) {
  ModelOutputGrid g;
  g.id = "m";
  g.axes = {std::vector<double>{-10.0, -3.3, 2.0, 7.1}, std::vector<double>{40.0, 30.0, 20.0}};
  g.values = Eigen::MatrixXd(4, 3);
  Rng rng(1);
  for (Eigen::Index i = 0; i < g.values.size(); ++i) g.values.data()[i] = rng.normal();
  RowMatrix P(12, 2);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) {
      P(i * 3 + j, 0) = g.axes[0][static_cast<std::size_t>(i)];
      P(i * 3 + j, 1) = g.axes[1][static_cast<std::size_t>(j)];
    }
  const auto v = bilinear_regrid(g, P);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_EQ(v(i * 3 + j), g.values(i, j));
}

TEST(Regrid, LinearFunctionsAreReproduced) {
  ModelOutputGrid g;
  g.id = "lin";
  g.axes = {std::vector<double>{0.0, 0.5, 2.0}, std::vector<double>{1.0, 3.0, 4.0, 9.0}};
  g.values = Eigen::MatrixXd(3, 4);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) g.values(i, j) = 2.0 * g.axes[0][i] - 0.5 * g.axes[1][j] + 1.0;
  Rng rng(2);
  ModelOutputGrid flipped = g;  // descending second axis
  std::reverse(flipped.axes[1].begin(), flipped.axes[1].end());
  flipped.values = g.values.rowwise().reverse().eval();
  for (int r = 0; r < 50; ++r) {
    const double a = 2.0 * rng.uniform(), b = 1.0 + 8.0 * rng.uniform();
    EXPECT_NEAR(bilinear_regrid(g, points({{a, b}}))(0), 2.0 * a - 0.5 * b + 1.0, 1e-12);
    EXPECT_NEAR(bilinear_regrid(flipped, points({{a, b}}))(0), 2.0 * a - 0.5 * b + 1.0, 1e-12);
  }
}

TEST(Regrid, OutsideAndPeriodicSeam) {
  ModelOutputGrid g;
  g.id = "lon";
  g.axes = {std::vector<double>{0.0, 90.0, 180.0, 270.0}, std::vector<double>{-10.0, 10.0}};
  g.values = Eigen::MatrixXd(4, 2);
  g.values << 0, 0, 1, 1, 2, 2, 3, 3;
  EXPECT_THROW(bilinear_regrid(g, points({{315.0, 0.0}})), DomainError);
  EXPECT_THROW(bilinear_regrid(g, points({{90.0, 11.0}})), DomainError);
  g.periodic[0] = true;
  // Halfway between 270 (value 3) and 360 = 0 (value 0).
  EXPECT_DOUBLE_EQ(bilinear_regrid(g, points({{315.0, 0.0}}))(0), 1.5);
  EXPECT_DOUBLE_EQ(bilinear_regrid(g, points({{-45.0, 0.0}}))(0), 1.5);
  EXPECT_DOUBLE_EQ(bilinear_regrid(g, points({{450.0, 0.0}}))(0), 1.0);
}

TEST(Regrid, InvalidGridsAreRejected) {
  auto g = unit_cell();
  g.axes[0] = {0.0, 0.0};
  EXPECT_THROW(g.validate(), ContractError);
  g = unit_cell();
  g.values = Eigen::MatrixXd::Zero(3, 2);
  EXPECT_THROW(g.validate(), ContractError);
}

TEST(MixingPrior, WeightsAverageOneOverK) {
  Hyperparameters hyper;
  hyper.m = 10;
  hyper.K = 3;
  SamplerConfig cfg;
  cfg.m = 10;
  cfg.grid = CutpointGrid::uniform(2, 20);
  cfg.leaf = tau_and_prior_mean(hyper, std::nullopt);
  RowMatrix X = points({{0.1, 0.9}, {0.5, 0.5}, {0.77, 0.2}});
  Rng rng(3);
  const int n = 4000;
  std::vector<std::vector<double>> w(9);
  for (int d = 0; d < n; ++d) {
    const auto state = draw_prior_state(cfg, X, 3, rng);
    const auto W = ensemble_mean(as_draw(state), cfg.grid, 1.0, X);
    for (int i = 0; i < 3; ++i)
      for (int l = 0; l < 3; ++l) w[static_cast<std::size_t>(i * 3 + l)].push_back(W(i, l));
  }
  for (const auto& v : w) {
    const auto m = rpbart::testing::moments(v);
    EXPECT_NEAR(m.mean, 1.0 / 3.0, 3 * std::sqrt(m.var / n));
    // Prior variance of each weight is m tau^2 = 1/(4k^2).
    EXPECT_NEAR(m.var, 0.25, 0.03);
  }
}

TEST(MixingPrior, LeavesAtPriorMeanGiveUniformWeights) {
  Hyperparameters hyper;
  hyper.m = 4;
  hyper.K = 2;
  const auto prior = tau_and_prior_mean(hyper, std::nullopt);
  const auto grid = CutpointGrid::uniform(1, 9);
  Rng rng(4);
  PosteriorDraw d;
  for (int j = 0; j < 4; ++j) {
    TreeDraw t;
    t.tree = draw_tree_prior(TreePrior{0.95, 1.0}, grid, rng);
    t.leaves = prior.mean.transpose().replicate(static_cast<Eigen::Index>(t.tree.num_leaves()), 1);
    t.gamma = 0.3;
    d.trees.push_back(t);
  }
  RowMatrix X(5, 1);
  X << 0.0, 0.2, 0.45, 0.8, 1.0;
  const auto W = ensemble_mean(d, grid, 1.0, X);
  for (Eigen::Index i = 0; i < W.size(); ++i) EXPECT_NEAR(W.data()[i], 0.5, 1e-14);
}

TEST(MixingWeights, SingleSplitHandExample) {
  const auto grid = CutpointGrid::uniform(1, 9);  // cut 4 is 0.5
  PosteriorDraw d;
  TreeDraw t;
  t.tree = Tree::from_preorder({NodeRecord{false, SplitRule{0, 4}}, NodeRecord{}, NodeRecord{}});
  t.leaves = Eigen::MatrixXd(2, 2);
  t.leaves << 0.8, 0.2, 0.1, 0.9;
  t.gamma = 0.5;
  d.trees = {t};
  RowMatrix X(1, 1);
  X << 0.6;
  // Right ramp: 1 - 0.5 (1 - 0.1 / 0.25) = 0.7 to the right.
  const auto W = ensemble_mean(d, grid, 1.0, X);
  EXPECT_NEAR(W(0, 0), 0.3 * 0.8 + 0.7 * 0.1, 1e-15);
  EXPECT_NEAR(W(0, 1), 0.3 * 0.2 + 0.7 * 0.9, 1e-15);
}

TEST(MixingPrediction, OneHotAndUniformWeights) {
  RowMatrix F(2, 3);
  F << 1.0, 2.0, 3.0, -1.0, 0.5, 4.0;
  WeightDraws one_hot{Eigen::MatrixXd::Zero(2, 3)};
  one_hot[0].col(1).setOnes();
  auto pred = mixed_prediction(one_hot, F);
  EXPECT_EQ(pred(0, 0), 2.0);
  EXPECT_EQ(pred(0, 1), 0.5);
  EXPECT_EQ(sum_of_weights(one_hot), Eigen::MatrixXd::Ones(1, 2));
  WeightDraws uniform{Eigen::MatrixXd::Constant(2, 3, 1.0 / 3.0)};
  pred = mixed_prediction(uniform, F);
  EXPECT_NEAR(pred(0, 0), 2.0, 1e-15);
  EXPECT_NEAR(pred(0, 1), 3.5 / 3.0, 1e-15);
  EXPECT_THROW(mixed_prediction(uniform, RowMatrix::Ones(3, 3)), ContractError);
}

TEST(MixingEvidence, UnitBasisMatchesScalarRegressionMarginal) {
  // With f = 1 the node marginal is the usual normal-normal one.
  Rng rng(5);
  NodeStats s(1);
  const double one = 1.0;
  std::vector<double> r(6);
  for (double& v : r) {
    v = rng.normal(0.4, 1.0);
    s.add(std::span<const double>(&one, 1), v);
  }
  const double tau2 = 0.3, sigma2 = 0.7, mu0 = 0.1, n = 6;
  double ss = 0.0, mean = 0.0;
  for (double v : r) mean += v / n;
  for (double v : r) ss += (v - mean) * (v - mean);
  const double closed = -0.5 * n * std::log(2 * std::numbers::pi * sigma2) -
                        0.5 * std::log(1 + n * tau2 / sigma2) - ss / (2 * sigma2) -
                        n * (mean - mu0) * (mean - mu0) / (2 * (sigma2 + n * tau2));
  EXPECT_NEAR(log_node_evidence(s, LeafPrior{std::sqrt(tau2), Eigen::VectorXd::Constant(1, mu0)}, sigma2), closed,
              1e-12);
}

TEST(FitMix, UnitBasisRecoversConstantMean) {
  Rng rng(6);
  const int n = 80;
  RowMatrix X(n, 1);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = rng.uniform();
    y(i) = 3.0 + 0.1 * rng.normal();
  }
  Hyperparameters h;
  h.m = 5;
  h.K = 1;
  h.schedule = McmcSchedule{300, 200, 1, -1};
  const auto fit = fit_mix(X, y, RowMatrix::Ones(n, 1), {"one"}, h, 7);
  const auto W = weights_at(fit.posterior, X);
  double mean = 0.0;
  for (const auto& w : W) mean += w.mean() / static_cast<double>(W.size());
  EXPECT_NEAR(mean, 3.0, 0.05);
}

TEST(FitMix, ReportsRowsWithMissingModelOutput) {
  RowMatrix X = RowMatrix::Zero(4, 1);
  X(1, 0) = 1.0;
  RowMatrix F = RowMatrix::Ones(4, 2);
  F(1, 0) = std::nan("");
  F(3, 1) = std::numeric_limits<double>::infinity();
  Hyperparameters h;
  h.K = 2;
  try {
    fit_mix(X, Eigen::VectorXd::Zero(4), F, {"a", "b"}, h, 1);
    FAIL() << "expected an ingestion error";
  } catch (const IngestionError& e) {
    EXPECT_NE(std::string(e.what()).find("2 4"), std::string::npos) << e.what();
  }
  h.K = 3;
  F = RowMatrix::Ones(4, 2);
  EXPECT_THROW(fit_mix(X, Eigen::VectorXd::Zero(4), F, {"a", "b"}, h, 1), ContractError);
}

TEST(FitMix, BiasedModelSetPushesWeightSumAboveOne) {
  // Both models under-predict by 5 where x > 0.5; the weights must grow there.
  Rng rng(8);
  const int n = 150;
  RowMatrix X(n, 1), F(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    const double x = (i + 0.5) / n;
    X(i, 0) = x;
    const double truth = 10.0 + 2.0 * x;
    F(i, 0) = truth + 0.5;
    F(i, 1) = truth - 0.5;
    y(i) = truth + (x > 0.5 ? 5.0 : 0.0) + 0.05 * rng.normal();
  }
  Hyperparameters h;
  h.m = 10;
  h.K = 2;
  h.schedule = McmcSchedule{500, 300, 1, -1};
  const auto fit = fit_mix(X, y, F, {"a", "b"}, h, 9);
  const auto sums = summarize(sum_of_weights(weights_at(fit.posterior, X, 2)));
  double left = 0.0, right = 0.0;
  int n_left = 0, n_right = 0;
  for (int i = 0; i < n; ++i) {
    if (X(i, 0) < 0.4) {
      left += sums.mean(i);
      ++n_left;
    } else if (X(i, 0) > 0.6) {
      right += sums.mean(i);
      ++n_right;
    }
  }
  left /= n_left;
  right /= n_right;
  EXPECT_NEAR(left, 1.0, 0.05);
  EXPECT_GT(right, 1.3);
}
