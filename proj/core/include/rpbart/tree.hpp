#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "rpbart/rng.hpp"

namespace rpbart {

/// Closed interval [lower, upper] on one rescaled input dimension.
struct Interval {
  double lower = 0.0;
  double upper = 1.0;
  bool operator==(const Interval&) const = default;
};

/// Candidate cutpoints per input dimension, inside the open unit interval.
///
/// Immutable once constructed. Cutpoints are addressed by index; index -1
/// stands for the lower domain edge 0 and index size(v) for the upper edge 1.
class CutpointGrid {
 public:
  CutpointGrid() = default;
  explicit CutpointGrid(std::vector<std::vector<double>> cuts);

  /// n_cut equally spaced interior points (k+1)/(n_cut+1) in every dimension.
  static CutpointGrid uniform(std::size_t dims, std::size_t n_cut = 100);

  std::size_t dims() const { return cuts_.size(); }
  std::size_t size(std::size_t v) const { return cuts_[v].size(); }
  const std::vector<double>& cuts(std::size_t v) const { return cuts_[v]; }
  double cut(std::size_t v, int index) const { return cuts_[v][static_cast<std::size_t>(index)]; }

  /// Value of an index bound, mapping -1 to 0 and size(v) to 1.
  double bound_value(std::size_t v, int index) const;

  bool operator==(const CutpointGrid&) const = default;

 private:
  std::vector<std::vector<double>> cuts_;
};

/// Split "x_var < cutpoint(var, cut)"; cut is an index into the grid.
struct SplitRule {
  int var = -1;
  int cut = -1;
  bool operator==(const SplitRule&) const = default;
};

/// One node of a preorder listing; the interchange form of a topology.
struct NodeRecord {
  bool leaf = true;
  SplitRule rule;
  bool operator==(const NodeRecord&) const = default;
};

/// Per-dimension exclusive index bounds (lo, hi) of the cutpoints still
/// available inside a node; the node's value interval is
/// [bound_value(lo), bound_value(hi)].
using IndexBox = std::vector<std::pair<int, int>>;

/// Binary tree topology with split rules on internal nodes.
///
/// Nodes are stored in preorder, so node ids are preorder positions and the
/// terminal nodes, read in id order, give the depth-first leaf enumeration
/// 0..B-1. Trees are values: birth() and death() return new trees.
class Tree {
 public:
  using NodeId = int;
  static constexpr int kMaxDepth = 64;

  Tree();
  static Tree from_preorder(std::vector<NodeRecord> records);

  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_leaves() const { return leaves_.size(); }
  bool is_leaf(NodeId id) const { return check(id).left < 0; }
  NodeId left(NodeId id) const { return check(id).left; }
  NodeId right(NodeId id) const { return check(id).right; }
  NodeId parent(NodeId id) const { return check(id).parent; }
  int depth(NodeId id) const { return check(id).depth; }
  const SplitRule& rule(NodeId id) const { return check(id).rule; }
  int max_depth() const;

  /// Leaf node ids in depth-first order; position is the leaf index b.
  const std::vector<NodeId>& leaves() const { return leaves_; }
  /// Leaf index of a terminal node, or -1 for internal nodes.
  int leaf_index(NodeId id) const;

  /// Internal nodes whose two children are both terminal.
  std::vector<NodeId> nogs() const;

  /// Splits a terminal node; its children take leaf indices b and b+1.
  Tree birth(NodeId leaf, SplitRule rule) const;
  /// Collapses an internal node with two terminal children.
  Tree death(NodeId nog) const;

  const std::vector<NodeRecord>& preorder() const { return records_; }

  bool operator==(const Tree& other) const { return records_ == other.records_; }

 private:
  struct Node {
    NodeId parent = -1;
    NodeId left = -1;
    NodeId right = -1;
    int depth = 0;
    SplitRule rule;
  };

  const Node& check(NodeId id) const;
  void rebuild();

  std::vector<NodeRecord> records_;
  std::vector<Node> nodes_;
  std::vector<NodeId> leaves_;
  std::vector<int> leaf_index_;
};

/// Depth-penalizing topology prior: P(node at depth d splits) = alpha (1+d)^-beta.
struct TreePrior {
  double alpha = 0.95;
  double beta = 1.0;
  void validate() const;
};

/// Index bounds of every node, computed from the root in one pass.
std::vector<IndexBox> all_index_bounds(const Tree& tree, const CutpointGrid& grid);

/// Tightest per-dimension interval implied by the ancestors of a node.
std::vector<Interval> node_bounds(const Tree& tree, const CutpointGrid& grid, Tree::NodeId node);

/// Dimensions with at least one cutpoint strictly inside the box.
std::vector<int> available_dims(const IndexBox& box);

/// A terminal node may split if it is above the depth cap and has a free cutpoint.
bool can_split(const IndexBox& box, int depth);

double depth_split_prob(int depth, const TreePrior& prior);

/// Log prior mass of a topology, including the uniform split-rule choice.
///
/// Terminal nodes with no free cutpoint (or at the depth cap) cannot split
/// and contribute log 1. Throws InvalidTreeError when a rule falls outside
/// the cutpoints available at its node.
double log_tree_prior(const Tree& tree, const TreePrior& prior, const CutpointGrid& grid);

/// Draw a topology from the prior by recursive growth from the root.
Tree draw_tree_prior(const TreePrior& prior, const CutpointGrid& grid, Rng& rng);

enum class MoveKind { Birth, Death };

/// A proposed topology change with exact log proposal densities.
struct Proposal {
  Tree tree;
  MoveKind kind = MoveKind::Birth;
  /// Birth: the split terminal node. Death: the collapsed node. Ids refer
  /// to the tree the move was proposed from; both keep the same id.
  Tree::NodeId node = 0;
  /// Leaf index in the old tree (birth) or of the left child (death).
  int leaf = 0;
  double log_forward = 0.0;
  double log_reverse = 0.0;
};

/// Probability of choosing a birth: 0.5, or 1/0 when only one kind is possible.
double birth_probability(const Tree& tree, const CutpointGrid& grid);

std::optional<Proposal> propose_birth(const Tree& tree, const CutpointGrid& grid, Rng& rng);
/// Empty when the tree has no internal node with two terminal children.
std::optional<Proposal> propose_death(const Tree& tree, const CutpointGrid& grid, Rng& rng);
/// Chooses birth or death, then proposes; empty only when no move exists.
std::optional<Proposal> propose_move(const Tree& tree, const CutpointGrid& grid, Rng& rng);

/// Terminal node containing x under hard routing (x_v < c goes left).
Tree::NodeId route(const Tree& tree, const CutpointGrid& grid, const double* x);

}  // namespace rpbart
