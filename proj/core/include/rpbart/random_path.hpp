#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <vector>

#include "rpbart/rng.hpp"
#include "rpbart/tree.hpp"

namespace rpbart {

/// Beta(a1, a2) prior on the per-tree bandwidth and the ramp shape q.
struct BandwidthPrior {
  double a1 = 2.0;
  double a2 = 10.0;
  double q = 1.0;
  void validate() const;
};

/// Probability of moving to the right child at a split on cutpoint `cut`.
///
/// The node's interval on the split dimension is `bounds`. Inside
/// (c - gamma (c - L), c + gamma (U - c)) the move is random and ramps
/// through 1/2 at the cutpoint; outside it the hard rule applies. A
/// degenerate side (c == L or c == U) falls back to the hard rule on that
/// side. gamma == 0 is the hard rule with x == c routed left.
double split_prob(double x, double cut, Interval bounds, double gamma, double q);

/// Leaf probabilities phi_b(x) for every terminal node, in leaf order.
void path_probs(const Tree& tree, const CutpointGrid& grid, double gamma, double q,
                std::span<const double> x, std::span<double> out);
std::vector<double> path_probs(const Tree& tree, const CutpointGrid& grid, double gamma, double q,
                               std::span<const double> x);

/// Draws a leaf index with probabilities phi. Throws if phi is not normalized.
int sample_assignment(std::span<const double> phi, Rng& rng);

/// One-hot encoding of a leaf index.
std::vector<double> one_hot(int index, std::size_t size);

/// Full conditional of one observation's leaf given the leaf parameters.
///
/// p_b is proportional to phi_b exp(-(r - fhat' mu_b)^2 / (2 sigma2)); leaf
/// parameters are the rows of `leaf_values` (B x K). With no fhat the
/// model is scalar regression and K must be 1.
std::vector<double> assignment_full_conditional(std::span<const double> phi, double residual,
                                                const Eigen::MatrixXd& leaf_values,
                                                std::optional<std::span<const double>> fhat,
                                                double sigma2);

/// Smooth tree output sum_b mu_b phi_b(x) as a K-vector.
Eigen::VectorXd marginal_tree_mean(const Tree& tree, const CutpointGrid& grid,
                                   const Eigen::MatrixXd& leaf_values, double gamma, double q,
                                   std::span<const double> x);

}  // namespace rpbart
