#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rpbart/model.hpp"

namespace rpbart {

/// A simulator's output on a rectilinear 2-D grid.
///
/// values(i, j) sits at (axis0[i], axis1[j]). Axes are strictly monotone
/// (either direction). A periodic axis wraps with the given period, which
/// bridges the seam between its last and first node.
struct ModelOutputGrid {
  std::string id;
  std::array<std::vector<double>, 2> axes;
  Eigen::MatrixXd values;
  std::array<bool, 2> periodic{false, false};
  std::array<double, 2> period{360.0, 360.0};
  void validate() const;
};

/// Bilinear interpolation at each row of `points` (n x 2). Exact at grid
/// nodes. A query outside a non-periodic axis throws DomainError.
Eigen::VectorXd bilinear_regrid(const ModelOutputGrid& grid, const RowMatrix& points);

/// Per draw, an n x K matrix of weights w(x).
using WeightDraws = std::vector<Eigen::MatrixXd>;

/// Mixing fit: y(x) ~ N(F(x)' w(x), sigma^2) with w a sum of smooth trees.
/// F must be fully observed; rows with missing (non-finite) values are
/// listed in the thrown IngestionError.
FitResult fit_mix(const RowMatrix& X, const Eigen::VectorXd& y, const RowMatrix& F,
                  const std::vector<std::string>& models, const Hyperparameters& hyper,
                  std::uint64_t seed);

/// Smooth weight functions at raw inputs X, one matrix per draw.
WeightDraws weights_at(const Posterior& post, const RowMatrix& X, int threads = 1);

/// Per draw F(x)' w(x): a draws x n matrix.
Eigen::MatrixXd mixed_prediction(const WeightDraws& weights, const RowMatrix& F);

/// Per draw sum_l w_l(x): a draws x n matrix; summarize() gives the diagnostic.
Eigen::MatrixXd sum_of_weights(const WeightDraws& weights);

}  // namespace rpbart
