#include "rpbart/projection.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "rpbart/errors.hpp"

namespace rpbart {

std::vector<double> softmax_project(std::span<const double> w, double t) {
  if (!(t > 0.0)) throw ContractError("softmax temperature must be > 0");
  if (w.empty()) throw ContractError("cannot project an empty vector");
  const double top = *std::max_element(w.begin(), w.end());
  std::vector<double> u(w.size());
  double total = 0.0;
  for (std::size_t l = 0; l < w.size(); ++l) total += u[l] = std::exp((w[l] - top) / t);
  for (double& v : u) v /= total;
  return u;
}

std::vector<double> sparsegen_project(std::span<const double> w, double T) {
  if (!(T < 1.0)) throw ContractError("sparsegen temperature must be < 1");
  if (w.empty()) throw ContractError("cannot project an empty vector");
  std::vector<double> sorted(w.begin(), w.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  // Q = largest t with 1 - T + t w_(t) > sum_{l<=t} w_(l).
  double prefix = 0.0, prefix_at_q = sorted[0];
  std::size_t Q = 1;
  for (std::size_t t = 1; t <= sorted.size(); ++t) {
    prefix += sorted[t - 1];
    if (1.0 - T + static_cast<double>(t) * sorted[t - 1] > prefix) {
      Q = t;
      prefix_at_q = prefix;
    }
  }
  const double lambda = (prefix_at_q - 1.0 + T) / static_cast<double>(Q);
  std::vector<double> u(w.size());
  for (std::size_t l = 0; l < w.size(); ++l) u[l] = std::max(0.0, (w[l] - lambda) / (1.0 - T));
  return u;
}

std::vector<double> project(std::span<const double> w, ProjectionKind kind, double temperature) {
  return kind == ProjectionKind::Softmax ? softmax_project(w, temperature)
                                         : sparsegen_project(w, temperature);
}

double discrepancy(std::span<const double> w, std::span<const double> u, std::span<const double> f) {
  if (w.size() != u.size() || w.size() != f.size()) throw ContractError("discrepancy inputs differ in length");
  double d = 0.0;
  for (std::size_t l = 0; l < w.size(); ++l) d += (w[l] - u[l]) * f[l];
  return d;
}

WeightDraws project_draws(const WeightDraws& w, ProjectionKind kind, double temperature) {
  WeightDraws out;
  out.reserve(w.size());
  for (const auto& W : w) {
    Eigen::MatrixXd U(W.rows(), W.cols());
    std::vector<double> row(static_cast<std::size_t>(W.cols()));
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      for (Eigen::Index l = 0; l < W.cols(); ++l) row[static_cast<std::size_t>(l)] = W(i, l);
      const auto u = project(row, kind, temperature);
      for (Eigen::Index l = 0; l < W.cols(); ++l) U(i, l) = u[static_cast<std::size_t>(l)];
    }
    out.push_back(std::move(U));
  }
  return out;
}

Eigen::MatrixXd discrepancy_draws(const WeightDraws& w, const WeightDraws& u, const RowMatrix& F) {
  if (w.size() != u.size()) throw ContractError("weight and projection draws differ in count");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(w.size()), F.rows());
  for (std::size_t d = 0; d < w.size(); ++d) {
    if (w[d].rows() != F.rows() || w[d].cols() != F.cols() || u[d].rows() != F.rows() ||
        u[d].cols() != F.cols())
      throw ContractError("weights, projections and model outputs do not align");
    out.row(static_cast<Eigen::Index>(d)) = (w[d] - u[d]).cwiseProduct(F).rowwise().sum().transpose();
  }
  return out;
}

double temperature_objective(const WeightDraws& w, const RowMatrix& F, ProjectionKind kind,
                             double temperature) {
  if (w.empty()) throw ContractError("no weight draws");
  const Eigen::MatrixXd delta = discrepancy_draws(w, project_draws(w, kind, temperature), F);
  return delta.colwise().mean().squaredNorm();
}

TemperatureChoice select_temperature(const std::vector<double>& candidates, const WeightDraws& w,
                                     const RowMatrix& F, ProjectionKind kind) {
  if (candidates.empty()) throw ContractError("empty temperature grid");
  TemperatureChoice choice;
  choice.candidates = candidates;
  std::sort(choice.candidates.begin(), choice.candidates.end());
  double best = std::numeric_limits<double>::infinity();
  for (double t : choice.candidates) {
    const double obj = temperature_objective(w, F, kind, t);
    choice.objective.push_back(obj);
    if (obj < best) {
      best = obj;
      choice.temperature = t;
    }
  }
  return choice;
}

std::vector<double> default_temperature_grid() {
  std::vector<double> grid(50);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = 0.9 * static_cast<double>(i) / 49.0;
  return grid;
}

}  // namespace rpbart
