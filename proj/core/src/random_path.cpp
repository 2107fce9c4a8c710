#include "rpbart/random_path.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rpbart/errors.hpp"

namespace rpbart {

void BandwidthPrior::validate() const {
  if (!(a1 > 0.0) || !(a2 > 0.0)) throw ContractError("bandwidth prior parameters must be > 0");
  if (!(q > 0.0)) throw ContractError("ramp shape q must be > 0");
}

double split_prob(double x, double cut, Interval bounds, double gamma, double q) {
  if (gamma <= 0.0) return x > cut ? 1.0 : 0.0;
  if (x >= cut) {
    const double width = gamma * (bounds.upper - cut);
    if (!(width > 0.0)) return 1.0;
    const double ramp = 1.0 - (x - cut) / width;
    if (ramp <= 0.0) return 1.0;
    return 1.0 - 0.5 * (q == 1.0 ? ramp : std::pow(ramp, q));
  }
  const double width = gamma * (cut - bounds.lower);
  if (!(width > 0.0)) return 0.0;
  const double ramp = 1.0 - (cut - x) / width;
  if (ramp <= 0.0) return 0.0;
  return 0.5 * (q == 1.0 ? ramp : std::pow(ramp, q));
}

namespace {

// Trees deeper than this accumulate path products in log space.
constexpr int kLogSpaceDepth = 20;

struct PathWalker {
  const Tree& tree;
  const CutpointGrid& grid;
  double gamma;
  double q;
  std::span<const double> x;
  std::span<double> out;
  bool log_space;
  std::vector<std::pair<int, int>> box;

  void walk(Tree::NodeId id, double mass) {
    if (tree.is_leaf(id)) {
      out[static_cast<std::size_t>(tree.leaf_index(id))] = log_space ? std::exp(mass) : mass;
      return;
    }
    const SplitRule& r = tree.rule(id);
    const auto v = static_cast<std::size_t>(r.var);
    auto& b = box[v];
    const Interval iv{grid.bound_value(v, b.first), grid.bound_value(v, b.second)};
    const double psi = split_prob(x[v], grid.cut(v, r.cut), iv, gamma, q);
    const auto saved = b;
    if (psi < 1.0) {
      b.second = r.cut;
      walk(tree.left(id), log_space ? mass + std::log1p(-psi) : mass * (1.0 - psi));
      b = saved;
    }
    if (psi > 0.0) {
      b.first = r.cut;
      walk(tree.right(id), log_space ? mass + std::log(psi) : mass * psi);
      b = saved;
    }
  }
};

}  // namespace

void path_probs(const Tree& tree, const CutpointGrid& grid, double gamma, double q,
                std::span<const double> x, std::span<double> out) {
  if (out.size() != tree.num_leaves()) throw ContractError("path_probs output size mismatch");
  if (x.size() != grid.dims()) throw ContractError("input dimension does not match the grid");
  std::fill(out.begin(), out.end(), 0.0);
  PathWalker w{tree, grid, gamma, q, x, out, tree.max_depth() > kLogSpaceDepth, {}};
  w.box.resize(grid.dims());
  for (std::size_t v = 0; v < grid.dims(); ++v) w.box[v] = {-1, static_cast<int>(grid.size(v))};
  w.walk(0, w.log_space ? 0.0 : 1.0);
}

std::vector<double> path_probs(const Tree& tree, const CutpointGrid& grid, double gamma, double q,
                               std::span<const double> x) {
  std::vector<double> out(tree.num_leaves());
  path_probs(tree, grid, gamma, q, x, out);
  return out;
}

int sample_assignment(std::span<const double> phi, Rng& rng) {
  const double total = std::accumulate(phi.begin(), phi.end(), 0.0);
  if (phi.empty() || std::abs(total - 1.0) > 1e-9)
    throw ContractError("assignment probabilities must sum to 1");
  const double u = rng.uniform() * total;
  double acc = 0.0;
  int last = -1;
  for (std::size_t b = 0; b < phi.size(); ++b) {
    if (phi[b] <= 0.0) continue;
    acc += phi[b];
    last = static_cast<int>(b);
    if (u < acc) return last;
  }
  return last;
}

std::vector<double> one_hot(int index, std::size_t size) {
  std::vector<double> z(size, 0.0);
  z.at(static_cast<std::size_t>(index)) = 1.0;
  return z;
}

std::vector<double> assignment_full_conditional(std::span<const double> phi, double residual,
                                                const Eigen::MatrixXd& leaf_values,
                                                std::optional<std::span<const double>> fhat,
                                                double sigma2) {
  if (static_cast<std::size_t>(leaf_values.rows()) != phi.size())
    throw ContractError("leaf parameter count does not match the path probabilities");
  if (!(sigma2 > 0.0)) throw ContractError("sigma2 must be > 0");
  if (fhat) {
    if (static_cast<std::size_t>(leaf_values.cols()) != fhat->size())
      throw ContractError("model output dimension does not match the leaf parameters");
  } else if (leaf_values.cols() != 1) {
    throw ContractError("regression leaves must be scalar");
  }

  std::vector<double> logp(phi.size(), -std::numeric_limits<double>::infinity());
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t b = 0; b < phi.size(); ++b) {
    if (phi[b] <= 0.0) continue;
    double mean = 0.0;
    if (fhat) {
      for (std::size_t l = 0; l < fhat->size(); ++l)
        mean += (*fhat)[l] * leaf_values(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(l));
    } else {
      mean = leaf_values(static_cast<Eigen::Index>(b), 0);
    }
    const double e = residual - mean;
    logp[b] = std::log(phi[b]) - e * e / (2.0 * sigma2);
    best = std::max(best, logp[b]);
  }
  if (!std::isfinite(best)) throw ContractError("all path probabilities are zero");

  std::vector<double> p(phi.size(), 0.0);
  double total = 0.0;
  for (std::size_t b = 0; b < phi.size(); ++b) {
    if (std::isfinite(logp[b])) {
      p[b] = std::exp(logp[b] - best);
      total += p[b];
    }
  }
  for (double& v : p) v /= total;
  return p;
}

Eigen::VectorXd marginal_tree_mean(const Tree& tree, const CutpointGrid& grid,
                                   const Eigen::MatrixXd& leaf_values, double gamma, double q,
                                   std::span<const double> x) {
  if (static_cast<std::size_t>(leaf_values.rows()) != tree.num_leaves())
    throw ContractError("leaf parameter count does not match the tree");
  const auto phi = path_probs(tree, grid, gamma, q, x);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(leaf_values.cols());
  for (std::size_t b = 0; b < phi.size(); ++b)
    if (phi[b] > 0.0) out += phi[b] * leaf_values.row(static_cast<Eigen::Index>(b)).transpose();
  return out;
}

}  // namespace rpbart
