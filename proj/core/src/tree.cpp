#include "rpbart/tree.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rpbart/errors.hpp"

namespace rpbart {

CutpointGrid::CutpointGrid(std::vector<std::vector<double>> cuts) : cuts_(std::move(cuts)) {
  if (cuts_.empty()) throw ContractError("cutpoint grid needs at least one dimension");
  for (std::size_t v = 0; v < cuts_.size(); ++v) {
    const auto& c = cuts_[v];
    if (c.empty()) throw ContractError("cutpoint grid dimension " + std::to_string(v) + " is empty");
    for (std::size_t k = 0; k < c.size(); ++k) {
      if (!(c[k] > 0.0 && c[k] < 1.0))
        throw ContractError("cutpoints must lie in the open interval (0,1)");
      if (k > 0 && !(c[k] > c[k - 1]))
        throw ContractError("cutpoints must be strictly increasing");
    }
  }
}

CutpointGrid CutpointGrid::uniform(std::size_t dims, std::size_t n_cut) {
  if (dims == 0 || n_cut == 0) throw ContractError("uniform grid needs dims >= 1 and n_cut >= 1");
  std::vector<double> one(n_cut);
  for (std::size_t k = 0; k < n_cut; ++k)
    one[k] = static_cast<double>(k + 1) / static_cast<double>(n_cut + 1);
  return CutpointGrid(std::vector<std::vector<double>>(dims, one));
}

double CutpointGrid::bound_value(std::size_t v, int index) const {
  if (index < 0) return 0.0;
  if (static_cast<std::size_t>(index) >= cuts_[v].size()) return 1.0;
  return cuts_[v][static_cast<std::size_t>(index)];
}

Tree::Tree() : records_{NodeRecord{}} { rebuild(); }

Tree Tree::from_preorder(std::vector<NodeRecord> records) {
  Tree t;
  t.records_ = std::move(records);
  t.rebuild();
  return t;
}

const Tree::Node& Tree::check(NodeId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
    throw StructuralError("unknown node id " + std::to_string(id));
  return nodes_[static_cast<std::size_t>(id)];
}

void Tree::rebuild() {
  if (records_.empty()) throw StructuralError("empty preorder listing");
  nodes_.assign(records_.size(), Node{});
  leaves_.clear();
  leaf_index_.assign(records_.size(), -1);

  // Iterative preorder decode: the stack holds nodes still waiting for a child.
  std::vector<NodeId> open;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto id = static_cast<NodeId>(i);
    Node& node = nodes_[i];
    if (i > 0) {
      if (open.empty()) throw StructuralError("preorder listing has trailing nodes");
      const NodeId p = open.back();
      Node& parent = nodes_[static_cast<std::size_t>(p)];
      node.parent = p;
      node.depth = parent.depth + 1;
      if (parent.left < 0) {
        parent.left = id;
      } else {
        parent.right = id;
        open.pop_back();
      }
    }
    if (records_[i].leaf) {
      leaf_index_[i] = static_cast<int>(leaves_.size());
      leaves_.push_back(id);
    } else {
      if (records_[i].rule.var < 0 || records_[i].rule.cut < 0)
        throw StructuralError("internal node without a split rule");
      node.rule = records_[i].rule;
      open.push_back(id);
    }
    if (node.depth > kMaxDepth) throw StructuralError("tree exceeds the maximum depth");
  }
  if (!open.empty()) throw StructuralError("preorder listing ends before all children are present");
}

int Tree::max_depth() const {
  int d = 0;
  for (NodeId id : leaves_) d = std::max(d, nodes_[static_cast<std::size_t>(id)].depth);
  return d;
}

int Tree::leaf_index(NodeId id) const {
  check(id);
  return leaf_index_[static_cast<std::size_t>(id)];
}

std::vector<Tree::NodeId> Tree::nogs() const {
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.left >= 0 && records_[static_cast<std::size_t>(n.left)].leaf &&
        records_[static_cast<std::size_t>(n.right)].leaf)
      out.push_back(static_cast<NodeId>(i));
  }
  return out;
}

Tree Tree::birth(NodeId leaf, SplitRule rule) const {
  if (!is_leaf(leaf)) throw StructuralError("birth requires a terminal node");
  std::vector<NodeRecord> rec = records_;
  const auto pos = static_cast<std::size_t>(leaf);
  rec[pos] = NodeRecord{false, rule};
  rec.insert(rec.begin() + static_cast<std::ptrdiff_t>(pos) + 1, 2, NodeRecord{});
  return from_preorder(std::move(rec));
}

Tree Tree::death(NodeId nog) const {
  const Node& n = check(nog);
  if (n.left < 0 || !records_[static_cast<std::size_t>(n.left)].leaf ||
      !records_[static_cast<std::size_t>(n.right)].leaf)
    throw StructuralError("death requires a node with two terminal children");
  std::vector<NodeRecord> rec = records_;
  const auto pos = static_cast<std::size_t>(nog);
  rec[pos] = NodeRecord{};
  rec.erase(rec.begin() + static_cast<std::ptrdiff_t>(pos) + 1,
            rec.begin() + static_cast<std::ptrdiff_t>(pos) + 3);
  return from_preorder(std::move(rec));
}

void TreePrior::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ContractError("tree prior alpha must lie in (0,1)");
  if (!(beta >= 0.0)) throw ContractError("tree prior beta must be >= 0");
}

std::vector<IndexBox> all_index_bounds(const Tree& tree, const CutpointGrid& grid) {
  std::vector<IndexBox> boxes(tree.num_nodes());
  IndexBox root(grid.dims());
  for (std::size_t v = 0; v < grid.dims(); ++v) root[v] = {-1, static_cast<int>(grid.size(v))};
  boxes[0] = std::move(root);
  // Preorder: a parent always precedes its children.
  for (std::size_t i = 0; i < tree.num_nodes(); ++i) {
    const auto id = static_cast<Tree::NodeId>(i);
    if (tree.is_leaf(id)) continue;
    const SplitRule& r = tree.rule(id);
    if (r.var < 0 || static_cast<std::size_t>(r.var) >= grid.dims())
      throw InvalidTreeError("split variable outside the grid dimensions");
    IndexBox l = boxes[i];
    IndexBox rt = boxes[i];
    l[static_cast<std::size_t>(r.var)].second = r.cut;
    rt[static_cast<std::size_t>(r.var)].first = r.cut;
    boxes[static_cast<std::size_t>(tree.left(id))] = std::move(l);
    boxes[static_cast<std::size_t>(tree.right(id))] = std::move(rt);
  }
  return boxes;
}

std::vector<Interval> node_bounds(const Tree& tree, const CutpointGrid& grid, Tree::NodeId node) {
  tree.depth(node);  // validates the id
  std::vector<Interval> out(grid.dims());
  IndexBox box(grid.dims());
  for (std::size_t v = 0; v < grid.dims(); ++v) box[v] = {-1, static_cast<int>(grid.size(v))};
  for (Tree::NodeId child = node, p = tree.parent(node); p >= 0; child = p, p = tree.parent(p)) {
    const SplitRule& r = tree.rule(p);
    auto& b = box[static_cast<std::size_t>(r.var)];
    if (tree.left(p) == child)
      b.second = std::min(b.second, r.cut);
    else
      b.first = std::max(b.first, r.cut);
  }
  for (std::size_t v = 0; v < grid.dims(); ++v)
    out[v] = Interval{grid.bound_value(v, box[v].first), grid.bound_value(v, box[v].second)};
  return out;
}

std::vector<int> available_dims(const IndexBox& box) {
  std::vector<int> dims;
  for (std::size_t v = 0; v < box.size(); ++v)
    if (box[v].second - box[v].first > 1) dims.push_back(static_cast<int>(v));
  return dims;
}

bool can_split(const IndexBox& box, int depth) {
  if (depth >= Tree::kMaxDepth) return false;
  return std::any_of(box.begin(), box.end(), [](const auto& b) { return b.second - b.first > 1; });
}

double depth_split_prob(int depth, const TreePrior& prior) {
  if (depth < 0) throw ContractError("depth must be >= 0");
  return prior.alpha * std::pow(1.0 + depth, -prior.beta);
}

double log_tree_prior(const Tree& tree, const TreePrior& prior, const CutpointGrid& grid) {
  const auto boxes = all_index_bounds(tree, grid);
  double lp = 0.0;
  for (std::size_t i = 0; i < tree.num_nodes(); ++i) {
    const auto id = static_cast<Tree::NodeId>(i);
    const int d = tree.depth(id);
    const IndexBox& box = boxes[i];
    if (tree.is_leaf(id)) {
      if (can_split(box, d)) lp += std::log1p(-depth_split_prob(d, prior));
      continue;
    }
    const SplitRule& r = tree.rule(id);
    const auto [lo, hi] = box[static_cast<std::size_t>(r.var)];
    if (!(r.cut > lo && r.cut < hi))
      throw InvalidTreeError("split at node " + std::to_string(id) +
                             " uses a cutpoint outside its available range");
    const auto dims = available_dims(box);
    lp += std::log(depth_split_prob(d, prior)) - std::log(static_cast<double>(dims.size())) -
          std::log(static_cast<double>(hi - lo - 1));
  }
  return lp;
}

namespace {

void grow(std::vector<NodeRecord>& out, IndexBox& box, int depth, const TreePrior& prior,
          Rng& rng) {
  if (!can_split(box, depth) || rng.uniform() >= depth_split_prob(depth, prior)) {
    out.push_back(NodeRecord{});
    return;
  }
  const auto dims = available_dims(box);
  const int v = dims[rng.index(dims.size())];
  auto& b = box[static_cast<std::size_t>(v)];
  const int cut = b.first + 1 + static_cast<int>(rng.index(static_cast<std::size_t>(b.second - b.first - 1)));
  out.push_back(NodeRecord{false, SplitRule{v, cut}});
  const auto saved = b;
  b.second = cut;
  grow(out, box, depth + 1, prior, rng);
  b = saved;
  b.first = cut;
  grow(out, box, depth + 1, prior, rng);
  b = saved;
}

std::vector<Tree::NodeId> splittable_leaves(const Tree& tree, const std::vector<IndexBox>& boxes) {
  std::vector<Tree::NodeId> out;
  for (Tree::NodeId id : tree.leaves())
    if (can_split(boxes[static_cast<std::size_t>(id)], tree.depth(id))) out.push_back(id);
  return out;
}

double birth_probability(std::size_t n_splittable, std::size_t n_nogs) {
  if (n_nogs == 0) return 1.0;
  if (n_splittable == 0) return 0.0;
  return 0.5;
}

// Log probability of proposing this particular split at this leaf,
// given that a birth was chosen.
double log_rule_choice(const IndexBox& box, const SplitRule& rule, std::size_t n_splittable) {
  const auto dims = available_dims(box);
  const auto [lo, hi] = box[static_cast<std::size_t>(rule.var)];
  return -std::log(static_cast<double>(n_splittable)) - std::log(static_cast<double>(dims.size())) -
         std::log(static_cast<double>(hi - lo - 1));
}

}  // namespace

Tree draw_tree_prior(const TreePrior& prior, const CutpointGrid& grid, Rng& rng) {
  std::vector<NodeRecord> rec;
  IndexBox box(grid.dims());
  for (std::size_t v = 0; v < grid.dims(); ++v) box[v] = {-1, static_cast<int>(grid.size(v))};
  grow(rec, box, 0, prior, rng);
  return Tree::from_preorder(std::move(rec));
}

double birth_probability(const Tree& tree, const CutpointGrid& grid) {
  const auto boxes = all_index_bounds(tree, grid);
  return birth_probability(splittable_leaves(tree, boxes).size(), tree.nogs().size());
}

std::optional<Proposal> propose_birth(const Tree& tree, const CutpointGrid& grid, Rng& rng) {
  const auto boxes = all_index_bounds(tree, grid);
  const auto good = splittable_leaves(tree, boxes);
  const double pb = birth_probability(good.size(), tree.nogs().size());
  if (good.empty() || pb <= 0.0) return std::nullopt;

  const Tree::NodeId leaf = good[rng.index(good.size())];
  const IndexBox& box = boxes[static_cast<std::size_t>(leaf)];
  const auto dims = available_dims(box);
  const int v = dims[rng.index(dims.size())];
  const auto [lo, hi] = box[static_cast<std::size_t>(v)];
  const int cut = lo + 1 + static_cast<int>(rng.index(static_cast<std::size_t>(hi - lo - 1)));
  const SplitRule rule{v, cut};

  Proposal p;
  p.tree = tree.birth(leaf, rule);
  p.kind = MoveKind::Birth;
  p.node = leaf;
  p.leaf = tree.leaf_index(leaf);
  p.log_forward = std::log(pb) + log_rule_choice(box, rule, good.size());

  const auto new_boxes = all_index_bounds(p.tree, grid);
  const auto new_nogs = p.tree.nogs();
  const double pb_new = birth_probability(splittable_leaves(p.tree, new_boxes).size(), new_nogs.size());
  p.log_reverse = std::log1p(-pb_new) - std::log(static_cast<double>(new_nogs.size()));
  return p;
}

std::optional<Proposal> propose_death(const Tree& tree, const CutpointGrid& grid, Rng& rng) {
  const auto nogs = tree.nogs();
  if (nogs.empty()) return std::nullopt;
  const auto boxes = all_index_bounds(tree, grid);
  const double pb = birth_probability(splittable_leaves(tree, boxes).size(), nogs.size());
  if (pb >= 1.0) return std::nullopt;

  const Tree::NodeId nog = nogs[rng.index(nogs.size())];
  Proposal p;
  p.tree = tree.death(nog);
  p.kind = MoveKind::Death;
  p.node = nog;
  p.leaf = tree.leaf_index(tree.left(nog));
  p.log_forward = std::log1p(-pb) - std::log(static_cast<double>(nogs.size()));

  const auto new_boxes = all_index_bounds(p.tree, grid);
  const auto good_new = splittable_leaves(p.tree, new_boxes);
  const double pb_new = birth_probability(good_new.size(), p.tree.nogs().size());
  p.log_reverse = std::log(pb_new) +
                  log_rule_choice(new_boxes[static_cast<std::size_t>(nog)], tree.rule(nog), good_new.size());
  return p;
}

std::optional<Proposal> propose_move(const Tree& tree, const CutpointGrid& grid, Rng& rng) {
  const double pb = birth_probability(tree, grid);
  if (rng.uniform() < pb) return propose_birth(tree, grid, rng);
  return propose_death(tree, grid, rng);
}

Tree::NodeId route(const Tree& tree, const CutpointGrid& grid, const double* x) {
  Tree::NodeId id = 0;
  while (!tree.is_leaf(id)) {
    const SplitRule& r = tree.rule(id);
    id = x[r.var] < grid.cut(static_cast<std::size_t>(r.var), r.cut) ? tree.left(id) : tree.right(id);
  }
  return id;
}

}  // namespace rpbart
