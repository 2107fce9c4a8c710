#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "rpbart/mixing.hpp"

namespace rpbart {

enum class ProjectionKind { Softmax, Sparsegen };

/// exp(w_l / t) / sum_k exp(w_k / t), stabilised by subtracting max(w).
std::vector<double> softmax_project(std::span<const double> w, double t);

/// Sparsegen-linear map onto the simplex with temperature T < 1; T = 0 is
/// sparsemax. Entries can be exactly zero.
std::vector<double> sparsegen_project(std::span<const double> w, double T);

std::vector<double> project(std::span<const double> w, ProjectionKind kind, double temperature);

/// sum_l (w_l - u_l) f_l.
double discrepancy(std::span<const double> w, std::span<const double> u, std::span<const double> f);

/// Applies the projection to every draw and point separately.
WeightDraws project_draws(const WeightDraws& w, ProjectionKind kind, double temperature);

/// Per draw and point discrepancy: a draws x n matrix.
Eigen::MatrixXd discrepancy_draws(const WeightDraws& w, const WeightDraws& u, const RowMatrix& F);

/// Sum over points of the squared posterior-mean discrepancy at one temperature.
double temperature_objective(const WeightDraws& w, const RowMatrix& F, ProjectionKind kind,
                             double temperature);

struct TemperatureChoice {
  double temperature = 0.0;
  std::vector<double> candidates;
  std::vector<double> objective;
};

/// Grid minimiser of temperature_objective; ties go to the smaller temperature.
TemperatureChoice select_temperature(const std::vector<double>& candidates, const WeightDraws& w,
                                     const RowMatrix& F, ProjectionKind kind);

/// 50 equally spaced values on [0, 0.9].
std::vector<double> default_temperature_grid();

}  // namespace rpbart
