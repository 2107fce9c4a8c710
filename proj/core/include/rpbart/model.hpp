#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "rpbart/sampler.hpp"

namespace rpbart {

/// Affine map of each input column onto [0,1], stored with the model.
struct InputScaling {
  std::vector<double> lower;
  std::vector<double> upper;

  /// Column minima and maxima; a constant column maps to 0.
  static InputScaling from_data(const RowMatrix& X);
  std::size_t dims() const { return lower.size(); }
  /// Rescale raw inputs; values outside the training range clamp to the edge.
  RowMatrix apply(const RowMatrix& X) const;
};

enum class FitMode { Regression, Mixing };

/// Everything needed to predict from a fit, and nothing else.
struct Posterior {
  FitMode mode = FitMode::Regression;
  Hyperparameters hyper;
  CutpointGrid grid;
  InputScaling scaling;
  /// Added back to regression predictions (the response is centred on its midrange).
  double y_offset = 0.0;
  std::vector<std::string> covariates;
  /// Model identifiers in basis-column order (mixing only).
  std::vector<std::string> models;
  std::uint64_t seed = 0;
  std::vector<PosteriorDraw> draws;

  std::size_t p() const { return scaling.dims(); }
  std::size_t K() const { return mode == FitMode::Mixing ? models.size() : 1; }
};

struct FitResult {
  Posterior posterior;
  McmcReport report;
  double lambda = 0.0;
  double tau = 0.0;
};

/// Residual variance of an ordinary least-squares fit of y on [1, X]
/// (or on F without intercept); the sample variance when there are too
/// few rows for the fit.
double least_squares_sigma2(const RowMatrix& design, const Eigen::VectorXd& y, bool intercept);

/// Smooth regression fit. X is in raw units; rescaling happens here.
FitResult fit_regression(const RowMatrix& X, const Eigen::VectorXd& y, const Hyperparameters& hyper,
                         std::uint64_t seed);

/// Per-draw sums of smooth tree outputs at raw inputs X: one n x K matrix per
/// draw. Rows are split across `threads` workers; the result does not
/// depend on the worker count.
std::vector<Eigen::MatrixXd> draw_outputs(const Posterior& post, const RowMatrix& X,
                                          int threads = 1);

/// Regression predictions: a draws x n matrix including the offset.
Eigen::MatrixXd predict_draws(const Posterior& post, const RowMatrix& X, int threads = 1);

}  // namespace rpbart
