#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "rpbart/errors.hpp"
#include "rpbart/random_path.hpp"
#include "stats.hpp"

using namespace rpbart;

namespace {

NodeRecord split(int var, int cut) { return NodeRecord{false, SplitRule{var, cut}}; }
NodeRecord leaf() { return NodeRecord{}; }
const CutpointGrid kTenths = CutpointGrid::uniform(1, 9);  // 0.1 .. 0.9

}  // namespace

TEST(SplitProb, HalfAtTheCutpoint) {
  for (double g : {0.1, 0.5, 0.9})
    for (double q : {1.0, 2.0, 3.5}) EXPECT_EQ(split_prob(0.3, 0.3, {0.1, 0.8}, g, q), 0.5);
}

TEST(SplitProb, HandEvaluatedRamp) {
  EXPECT_NEAR(split_prob(0.625, 0.5, {0.0, 1.0}, 0.5, 1.0), 0.75, 1e-12);
  EXPECT_NEAR(split_prob(0.375, 0.5, {0.0, 1.0}, 0.5, 1.0), 0.25, 1e-12);
  // q = 2 on the right: 1 - 0.5 (1 - 0.5)^2.
  EXPECT_NEAR(split_prob(0.625, 0.5, {0.0, 1.0}, 0.5, 2.0), 0.875, 1e-12);
}

TEST(SplitProb, DeterministicOutsideTheInterval) {
  const double c = 0.4, L = 0.2, U = 0.9, g = 0.3;
  EXPECT_EQ(split_prob(c + g * (U - c), c, {L, U}, g, 1.0), 1.0);
  EXPECT_EQ(split_prob(0.85, c, {L, U}, g, 1.0), 1.0);
  EXPECT_EQ(split_prob(c - g * (c - L), c, {L, U}, g, 1.0), 0.0);
  EXPECT_EQ(split_prob(0.21, c, {L, U}, g, 1.0), 0.0);
}

TEST(SplitProb, DegenerateSidesFallBackToHardRouting) {
  // c == U: nothing to the right, x above the cut is routed right.
  EXPECT_EQ(split_prob(0.95, 0.9, {0.0, 0.9}, 0.5, 1.0), 1.0);
  EXPECT_NEAR(split_prob(0.8, 0.9, {0.0, 0.9}, 0.5, 1.0), 0.5 * (1.0 - 0.1 / 0.45), 1e-12);
  EXPECT_EQ(split_prob(0.05, 0.1, {0.1, 1.0}, 0.5, 1.0), 0.0);
  EXPECT_TRUE(std::isfinite(split_prob(0.1, 0.1, {0.1, 0.1}, 0.5, 1.0)));
}

TEST(SplitProb, ZeroBandwidthRoutesCutpointLeft) {
  EXPECT_EQ(split_prob(0.5, 0.5, {0.0, 1.0}, 0.0, 1.0), 0.0);
  EXPECT_EQ(split_prob(0.5000001, 0.5, {0.0, 1.0}, 0.0, 1.0), 1.0);
}

TEST(PathProbs, RootOnly) {
  EXPECT_EQ(path_probs(Tree(), kTenths, 0.5, 1.0, std::vector<double>{0.3}), std::vector<double>{1.0});
}

TEST(PathProbs, FigureThreeAnchor) {
  // Splits at 0.5 then, on the right, at 0.7 (the [-1,1] cuts 0 and 0.4 rescaled).
  const Tree t = Tree::from_preorder({split(0, 4), leaf(), split(0, 6), leaf(), leaf()});
  const auto phi = path_probs(t, kTenths, 0.5, 1.0, std::vector<double>{0.5});
  ASSERT_EQ(phi.size(), 3u);
  EXPECT_NEAR(phi[0], 0.5, 1e-12);
  EXPECT_NEAR(phi[1], 0.5, 1e-12);
  EXPECT_NEAR(phi[2], 0.0, 1e-12);
}

TEST(PathProbs, SingleSplitHandValue) {
  const Tree t = Tree::from_preorder({split(0, 4), leaf(), leaf()});
  const auto phi = path_probs(t, kTenths, 0.5, 1.0, std::vector<double>{0.375});
  EXPECT_NEAR(phi[0], 0.75, 1e-12);
  EXPECT_NEAR(phi[1], 0.25, 1e-12);
}

TEST(PathProbs, NormalizedContinuousAndOneHotOutsideRamps) {
  Rng rng(8);
  const auto grid = CutpointGrid::uniform(2, 50);
  for (int rep = 0; rep < 40; ++rep) {
    const Tree t = draw_tree_prior(TreePrior{0.95, 0.5}, grid, rng);
    const double g = rng.uniform();
    for (int k = 0; k < 40; ++k) {
      const std::vector<double> x{rng.uniform(), rng.uniform()};
      const auto phi = path_probs(t, grid, g, 1.0, x);
      EXPECT_NEAR(std::accumulate(phi.begin(), phi.end(), 0.0), 1.0, 1e-12);
      for (double p : phi) EXPECT_GE(p, 0.0);
      // Lipschitz-type bound for q = 1: a step of delta moves phi by O(delta).
      const double delta = 1e-7;
      const auto phi2 = path_probs(t, grid, g, 1.0, std::vector<double>{x[0] + delta, x[1]});
      double change = 0.0;
      for (std::size_t b = 0; b < phi.size(); ++b) change = std::max(change, std::abs(phi[b] - phi2[b]));
      EXPECT_LT(change, 1e-7 * 1e3);
    }
  }
}

TEST(PathProbs, SmallBandwidthRecoversHardRouting) {
  Rng rng(13);
  const auto grid = CutpointGrid::uniform(2, 10);
  const Tree t = draw_tree_prior(TreePrior{0.95, 0.3}, grid, rng);
  for (int k = 0; k < 200; ++k) {
    std::vector<double> x{rng.uniform(), rng.uniform()};
    const auto phi = path_probs(t, grid, 1e-9, 1.0, x);
    const int b = t.leaf_index(route(t, grid, x.data()));
    EXPECT_EQ(phi[static_cast<std::size_t>(b)], 1.0);
  }
}

TEST(PathProbs, DeepTreesStayNormalized) {
  // A 30-deep chain exercises the log-space path.
  std::vector<NodeRecord> rec;
  const int depth = 30;
  const auto grid = CutpointGrid::uniform(1, 100);
  for (int d = 0; d < depth; ++d) {
    rec.push_back(split(0, 99 - d));
  }
  rec.push_back(leaf());
  for (int d = 0; d < depth; ++d) rec.push_back(leaf());
  const Tree t = Tree::from_preorder(rec);
  ASSERT_EQ(t.max_depth(), depth);
  const auto phi = path_probs(t, grid, 0.9, 1.0, std::vector<double>{0.7});
  EXPECT_NEAR(std::accumulate(phi.begin(), phi.end(), 0.0), 1.0, 1e-12);
}

TEST(PathProbs, SizeMismatchIsContractError) {
  std::vector<double> out(3);
  EXPECT_THROW(path_probs(Tree(), kTenths, 0.5, 1.0, std::vector<double>{0.3}, out), ContractError);
}

TEST(SampleAssignment, DegenerateAndValidated) {
  Rng rng(1);
  const std::vector<double> phi{1.0, 0.0, 0.0};
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_assignment(phi, rng), 0);
  EXPECT_THROW(sample_assignment(std::vector<double>{0.5, 0.4}, rng), ContractError);
  const auto z = one_hot(2, 4);
  EXPECT_EQ(std::accumulate(z.begin(), z.end(), 0.0), 1.0);
  EXPECT_EQ(z[2], 1.0);
}

TEST(SampleAssignment, FrequenciesMatchProbabilities) {
  Rng rng(17);
  const std::vector<double> phi{0.5, 0.5, 0.0};
  std::vector<double> counts(3, 0.0);
  for (int i = 0; i < 100000; ++i) counts[static_cast<std::size_t>(sample_assignment(phi, rng))] += 1;
  EXPECT_EQ(counts[2], 0.0);
  EXPECT_GT(rpbart::testing::chisq_pvalue(counts, phi), 0.01);
}

TEST(AssignmentFullConditional, FlatLikelihoodReturnsPrior) {
  const std::vector<double> phi{0.2, 0.3, 0.5};
  Eigen::MatrixXd mu = Eigen::MatrixXd::Constant(3, 1, 0.7);
  const auto p = assignment_full_conditional(phi, 1.3, mu, std::nullopt, 0.4);
  for (std::size_t b = 0; b < 3; ++b) EXPECT_NEAR(p[b], phi[b], 1e-15);
  mu << 0.0, 1.0, -2.0;
  const auto wide = assignment_full_conditional(phi, 1.3, mu, std::nullopt, 1e18);
  for (std::size_t b = 0; b < 3; ++b) EXPECT_NEAR(wide[b], phi[b], 1e-12);
}

TEST(AssignmentFullConditional, HandExample) {
  Eigen::MatrixXd mu(2, 1);
  mu << 0.0, 1.0;
  const auto p = assignment_full_conditional(std::vector<double>{0.5, 0.5}, 1.0, mu, std::nullopt, 1.0);
  const double a = std::exp(-0.5);
  EXPECT_NEAR(p[0], a / (a + 1.0), 1e-12);
  EXPECT_NEAR(p[1], 1.0 / (a + 1.0), 1e-12);
  EXPECT_NEAR(p[0], 0.3775, 5e-5);
}

TEST(AssignmentFullConditional, MixingUsesModelOutputs) {
  Eigen::MatrixXd mu(2, 2);
  mu << 1.0, 0.0, 0.0, 1.0;
  const std::vector<double> f{2.0, 0.0};
  // Node 0 predicts 2, node 1 predicts 0; residual 2 favours node 0.
  const auto p = assignment_full_conditional(std::vector<double>{0.5, 0.5}, 2.0, mu, std::span<const double>(f), 1.0);
  EXPECT_NEAR(p[0], 1.0 / (1.0 + std::exp(-2.0)), 1e-12);
  EXPECT_THROW(assignment_full_conditional(std::vector<double>{0.0, 0.0}, 1.0, mu, std::span<const double>(f), 1.0),
               ContractError);
}

TEST(MarginalTreeMean, Examples) {
  Eigen::MatrixXd three(1, 1);
  three << 3.0;
  EXPECT_DOUBLE_EQ(marginal_tree_mean(Tree(), kTenths, three, 0.5, 1.0, std::vector<double>{0.2})(0), 3.0);
  const Tree t = Tree::from_preorder({split(0, 4), leaf(), leaf()});
  Eigen::MatrixXd mu(2, 1);
  mu << 0.0, 1.0;
  EXPECT_NEAR(marginal_tree_mean(t, kTenths, mu, 0.5, 1.0, std::vector<double>{0.375})(0), 0.25, 1e-12);
  mu << 2.5, 2.5;
  for (double g : {0.01, 0.5, 0.99})
    EXPECT_NEAR(marginal_tree_mean(t, kTenths, mu, g, 1.0, std::vector<double>{0.47})(0), 2.5, 1e-12);
  EXPECT_THROW(marginal_tree_mean(t, kTenths, three, 0.5, 1.0, std::vector<double>{0.4}), ContractError);
}
