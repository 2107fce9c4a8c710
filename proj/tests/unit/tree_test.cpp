#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "rpbart/errors.hpp"
#include "rpbart/random_path.hpp"
#include "rpbart/tree.hpp"
#include "stats.hpp"

using namespace rpbart;

namespace {

NodeRecord split(int var, int cut) { return NodeRecord{false, SplitRule{var, cut}}; }
NodeRecord leaf() { return NodeRecord{}; }

// Cutpoints 0.1, ..., 0.9: index 4 is 0.5, index 6 is 0.7.
CutpointGrid tenths(std::size_t dims = 1) { return CutpointGrid::uniform(dims, 9); }

}  // namespace

TEST(CutpointGrid, UniformIsInteriorAndIncreasing) {
  const auto g = CutpointGrid::uniform(2, 100);
  ASSERT_EQ(g.dims(), 2u);
  ASSERT_EQ(g.size(0), 100u);
  for (std::size_t v = 0; v < 2; ++v)
    for (std::size_t i = 0; i < g.size(v); ++i) {
      EXPECT_GT(g.cuts(v)[i], 0.0);
      EXPECT_LT(g.cuts(v)[i], 1.0);
      if (i) EXPECT_GT(g.cuts(v)[i], g.cuts(v)[i - 1]);
    }
  EXPECT_DOUBLE_EQ(g.bound_value(0, -1), 0.0);
  EXPECT_DOUBLE_EQ(g.bound_value(0, 100), 1.0);
}

TEST(CutpointGrid, RejectsInvalidCuts) {
  EXPECT_THROW(CutpointGrid({{0.5, 0.4}}), ContractError);
  EXPECT_THROW(CutpointGrid({{0.0, 0.5}}), ContractError);
  EXPECT_THROW(CutpointGrid({{0.5, 1.0}}), ContractError);
}

TEST(Tree, PreorderRoundTripAndLeafOrder) {
  const Tree t = Tree::from_preorder({split(0, 4), leaf(), split(0, 6), leaf(), leaf()});
  EXPECT_EQ(t.num_nodes(), 5u);
  EXPECT_EQ(t.num_leaves(), 3u);
  EXPECT_EQ(t.leaves(), (std::vector<Tree::NodeId>{1, 3, 4}));
  EXPECT_EQ(t.leaf_index(3), 1);
  EXPECT_EQ(t.leaf_index(2), -1);
  EXPECT_EQ(t.depth(4), 2);
  EXPECT_EQ(t.max_depth(), 2);
  EXPECT_EQ(t.nogs(), std::vector<Tree::NodeId>{2});
  EXPECT_EQ(Tree::from_preorder(t.preorder()), t);
}

TEST(Tree, MalformedListingsAreStructuralErrors) {
  EXPECT_THROW(Tree::from_preorder({split(0, 4), leaf()}), StructuralError);
  EXPECT_THROW(Tree::from_preorder({leaf(), leaf()}), StructuralError);
  EXPECT_THROW(Tree::from_preorder({}), StructuralError);
  const Tree t;
  EXPECT_THROW(t.depth(3), StructuralError);
}

TEST(NodeBounds, RootIsUnitBox) {
  const Tree t = Tree::from_preorder({split(0, 4), leaf(), leaf()});
  const auto b = node_bounds(t, tenths(2), 0);
  EXPECT_EQ(b[0], (Interval{0.0, 1.0}));
  EXPECT_EQ(b[1], (Interval{0.0, 1.0}));
}

TEST(NodeBounds, LeftChildOfHalfSplit) {
  const Tree t = Tree::from_preorder({split(0, 4), leaf(), leaf()});
  const auto b = node_bounds(t, tenths(), 1);
  EXPECT_DOUBLE_EQ(b[0].lower, 0.0);
  EXPECT_DOUBLE_EQ(b[0].upper, 0.5);
}

TEST(NodeBounds, RightRightGrandchildOfChain) {
  const Tree t = Tree::from_preorder({split(0, 4), leaf(), split(0, 6), leaf(), leaf()});
  const auto b = node_bounds(t, tenths(), 4);
  EXPECT_DOUBLE_EQ(b[0].lower, 0.7);
  EXPECT_DOUBLE_EQ(b[0].upper, 1.0);
  EXPECT_THROW(node_bounds(t, tenths(), 9), StructuralError);
}

TEST(NodeBounds, SiblingsTileTheParent) {
  Rng rng(11);
  const auto grid = CutpointGrid::uniform(3, 20);
  for (int rep = 0; rep < 50; ++rep) {
    const Tree t = draw_tree_prior(TreePrior{0.95, 0.5}, grid, rng);
    for (std::size_t i = 0; i < t.num_nodes(); ++i) {
      const auto id = static_cast<Tree::NodeId>(i);
      if (t.is_leaf(id)) continue;
      const auto v = static_cast<std::size_t>(t.rule(id).var);
      const auto parent = node_bounds(t, grid, id);
      const auto l = node_bounds(t, grid, t.left(id));
      const auto r = node_bounds(t, grid, t.right(id));
      EXPECT_EQ(l[v].lower, parent[v].lower);
      EXPECT_EQ(l[v].upper, r[v].lower);
      EXPECT_EQ(r[v].upper, parent[v].upper);
      EXPECT_LT(l[v].lower, l[v].upper);
      EXPECT_LT(r[v].lower, r[v].upper);
    }
  }
}

TEST(DepthSplitProb, Examples) {
  EXPECT_DOUBLE_EQ(depth_split_prob(0, TreePrior{0.95, 0.0}), 0.95);
  EXPECT_DOUBLE_EQ(depth_split_prob(1, TreePrior{0.95, 1.0}), 0.475);
  EXPECT_DOUBLE_EQ(depth_split_prob(3, TreePrior{0.95, 2.0}), 0.059375);
  EXPECT_THROW(depth_split_prob(-1, TreePrior{}), ContractError);
}

TEST(LogTreePrior, RootOnly) {
  EXPECT_NEAR(log_tree_prior(Tree(), TreePrior{0.95, 1.0}, CutpointGrid::uniform(1, 10)), std::log(0.05), 1e-14);
}

TEST(LogTreePrior, SingleSplit) {
  const auto grid = CutpointGrid::uniform(1, 10);
  const Tree t = Tree::from_preorder({split(0, 5), leaf(), leaf()});
  const double expected = std::log(0.95) + std::log(0.1) + 2.0 * std::log(1.0 - 0.475);
  EXPECT_NEAR(log_tree_prior(t, TreePrior{0.95, 1.0}, grid), expected, 1e-14);
}

TEST(LogTreePrior, RejectsRulesOutsideTheNode) {
  const auto grid = tenths();
  // Right child of x < 0.5 cannot split again at 0.3.
  const Tree t = Tree::from_preorder({split(0, 4), leaf(), split(0, 2), leaf(), leaf()});
  EXPECT_THROW(log_tree_prior(t, TreePrior{}, grid), InvalidTreeError);
  const Tree bad_var = Tree::from_preorder({split(3, 4), leaf(), leaf()});
  EXPECT_THROW(log_tree_prior(bad_var, TreePrior{}, grid), InvalidTreeError);
}

TEST(LogTreePrior, MatchesPriorSamplingFrequencies) {
  // Small grid so the topology space is enumerable by sampling.
  const auto grid = CutpointGrid::uniform(1, 3);
  const TreePrior prior{0.9, 0.5};
  Rng rng(5);
  std::map<std::vector<NodeRecord>, int, decltype([](const auto& a, const auto& b) {
             return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(), [](const NodeRecord& x, const NodeRecord& y) {
               return std::tie(x.leaf, x.rule.var, x.rule.cut) < std::tie(y.leaf, y.rule.var, y.rule.cut);
             });
           })>
      counts;
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[draw_tree_prior(prior, grid, rng).preorder()];
  std::vector<double> observed, probs;
  double total = 0.0;
  for (const auto& [rec, c] : counts) {
    const double p = std::exp(log_tree_prior(Tree::from_preorder(rec), prior, grid));
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
    observed.push_back(c);
    probs.push_back(p);
    total += p;
  }
  // Every topology on this grid was visited, so the masses sum to one.
  EXPECT_NEAR(total, 1.0, 1e-9);
  EXPECT_GT(rpbart::testing::chisq_pvalue(observed, probs), 0.01);
}

TEST(Partition, HardRoutingMatchesZeroBandwidthPaths) {
  Rng rng(3);
  const auto grid = CutpointGrid::uniform(2, 30);
  for (int rep = 0; rep < 30; ++rep) {
    const Tree t = draw_tree_prior(TreePrior{0.95, 0.5}, grid, rng);
    for (int k = 0; k < 50; ++k) {
      const std::vector<double> x{rng.uniform(), rng.uniform()};
      const auto phi = path_probs(t, grid, 0.0, 1.0, x);
      const int b = t.leaf_index(route(t, grid, x.data()));
      for (std::size_t i = 0; i < phi.size(); ++i) EXPECT_EQ(phi[i], static_cast<int>(i) == b ? 1.0 : 0.0);
    }
  }
}

TEST(ProposeMove, RootOnlyIsAlwaysBirth) {
  Rng rng(1);
  const auto grid = tenths(2);
  for (int i = 0; i < 100; ++i) {
    const auto p = propose_move(Tree(), grid, rng);
    ASSERT_TRUE(p);
    EXPECT_EQ(p->kind, MoveKind::Birth);
    EXPECT_NEAR(p->log_forward, std::log(1.0 / 2.0 / 9.0), 1e-14);
  }
  EXPECT_FALSE(propose_death(Tree(), grid, rng));
}

TEST(ProposeMove, BirthThenDeathRestoresTopology) {
  Rng rng(2);
  const auto grid = tenths(2);
  const Tree t = Tree::from_preorder({split(0, 4), leaf(), split(1, 6), leaf(), leaf()});
  for (int i = 0; i < 200; ++i) {
    const auto b = propose_birth(t, grid, rng);
    ASSERT_TRUE(b);
    const Tree back = b->tree.death(b->node);
    EXPECT_EQ(back, t);
  }
}

TEST(ProposeMove, ForwardAndReverseDensitiesAreConsistent) {
  Rng rng(4);
  const auto grid = CutpointGrid::uniform(2, 4);
  for (int rep = 0; rep < 200; ++rep) {
    const Tree t = draw_tree_prior(TreePrior{0.95, 0.5}, grid, rng);
    const auto b = propose_birth(t, grid, rng);
    if (!b) continue;
    // Find the death that undoes this birth and compare densities.
    std::optional<Proposal> d;
    for (int tries = 0; tries < 10000 && !(d && d->node == b->node); ++tries) d = propose_death(b->tree, grid, rng);
    ASSERT_TRUE(d && d->node == b->node);
    EXPECT_EQ(d->tree, t);
    EXPECT_NEAR(d->log_forward, b->log_reverse, 1e-12);
    EXPECT_NEAR(d->log_reverse, b->log_forward, 1e-12);
  }
}

TEST(ProposeMove, MoveChoiceFrequenciesOnThreeLeafTree) {
  Rng rng(9);
  const auto grid = tenths(2);
  const Tree t = Tree::from_preorder({split(0, 4), leaf(), split(1, 6), leaf(), leaf()});
  const double pb = birth_probability(t, grid);
  EXPECT_DOUBLE_EQ(pb, 0.5);
  const int n = 100000;
  int births = 0;
  for (int i = 0; i < n; ++i) births += propose_move(t, grid, rng)->kind == MoveKind::Birth;
  const double se = std::sqrt(pb * (1 - pb) / n);
  EXPECT_LT(std::abs(births / static_cast<double>(n) - pb), 3.0 * se);
}

TEST(ProposeMove, NoSplittableLeafForcesDeath) {
  // One cutpoint: after the root split neither child can split.
  const auto grid = CutpointGrid::uniform(1, 1);
  const Tree t = Tree::from_preorder({split(0, 0), leaf(), leaf()});
  EXPECT_DOUBLE_EQ(birth_probability(t, grid), 0.0);
  Rng rng(1);
  const auto p = propose_move(t, grid, rng);
  ASSERT_TRUE(p);
  EXPECT_EQ(p->kind, MoveKind::Death);
  EXPECT_NEAR(p->log_forward, 0.0, 1e-15);
  EXPECT_NEAR(p->log_reverse, std::log(1.0), 1e-15);
}

TEST(TreePrior, Validation) {
  EXPECT_THROW((TreePrior{1.0, 1.0}.validate()), ContractError);
  EXPECT_THROW((TreePrior{0.5, -1.0}.validate()), ContractError);
  EXPECT_NO_THROW((TreePrior{0.5, 0.0}.validate()));
}
