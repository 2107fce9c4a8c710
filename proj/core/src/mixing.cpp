#include "rpbart/mixing.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rpbart/errors.hpp"

namespace rpbart {

void ModelOutputGrid::validate() const {
  for (std::size_t a = 0; a < 2; ++a) {
    const auto& ax = axes[a];
    if (ax.size() < 2) throw ContractError("grid axis needs at least two nodes");
    const bool up = ax[1] > ax[0];
    for (std::size_t i = 1; i < ax.size(); ++i)
      if (!(up ? ax[i] > ax[i - 1] : ax[i] < ax[i - 1]))
        throw ContractError("grid axis must be strictly monotone");
    if (periodic[a] && !(period[a] > std::abs(ax.back() - ax.front())))
      throw ContractError("period must exceed the axis span");
  }
  if (values.rows() != static_cast<Eigen::Index>(axes[0].size()) ||
      values.cols() != static_cast<Eigen::Index>(axes[1].size()))
    throw ContractError("grid values do not match the axes");
}

namespace {

/// Cell of a query on one axis: lower node, upper node, weight of the upper node.
struct Bracket {
  Eigen::Index lo;
  Eigen::Index hi;
  double t;
};

Bracket locate(const std::vector<double>& axis, bool periodic, double period, double x) {
  const bool up = axis[1] > axis[0];
  // Walk a descending axis in reverse; node() maps positions back.
  const auto n = static_cast<Eigen::Index>(axis.size());
  auto node = [&](Eigen::Index i) { return up ? i : n - 1 - i; };
  auto coord = [&](Eigen::Index i) { return axis[static_cast<std::size_t>(node(i))]; };
  double q = x;
  const double first = coord(0);
  const double last = coord(n - 1);
  if (periodic) {
    q = first + std::fmod(std::fmod(q - first, period) + period, period);
    if (q > last) {
      const double span = first + period - last;
      return {node(n - 1), node(0), (q - last) / span};
    }
  } else if (q < first || q > last || std::isnan(q)) {
    std::ostringstream msg;
    msg << "query coordinate " << x << " is outside the grid axis [" << std::min(axis.front(), axis.back())
        << ", " << std::max(axis.front(), axis.back()) << "]";
    throw DomainError(msg.str());
  }
  Eigen::Index i = 0;
  {
    Eigen::Index lo = 0, hi = n - 1;
    while (hi - lo > 1) {
      const Eigen::Index mid = (lo + hi) / 2;
      (coord(mid) <= q ? lo : hi) = mid;
    }
    i = lo;
  }
  const double a = coord(i);
  const double b = coord(i + 1);
  const double t = (q - a) / (b - a);
  if (t == 0.0) return {node(i), node(i), 0.0};
  if (t == 1.0) return {node(i + 1), node(i + 1), 0.0};
  return {node(i), node(i + 1), t};
}

}  // namespace

Eigen::VectorXd bilinear_regrid(const ModelOutputGrid& grid, const RowMatrix& points) {
  grid.validate();
  if (points.cols() != 2) throw ContractError("regrid queries need two coordinates");
  Eigen::VectorXd out(points.rows());
  for (Eigen::Index r = 0; r < points.rows(); ++r) {
    const Bracket a = locate(grid.axes[0], grid.periodic[0], grid.period[0], points(r, 0));
    const Bracket b = locate(grid.axes[1], grid.periodic[1], grid.period[1], points(r, 1));
    const auto& V = grid.values;
    if (a.t == 0.0 && b.t == 0.0) {
      out(r) = V(a.lo, b.lo);  // exact node value
      continue;
    }
    out(r) = (1.0 - a.t) * (1.0 - b.t) * V(a.lo, b.lo) + a.t * (1.0 - b.t) * V(a.hi, b.lo) +
             (1.0 - a.t) * b.t * V(a.lo, b.hi) + a.t * b.t * V(a.hi, b.hi);
  }
  return out;
}

FitResult fit_mix(const RowMatrix& X, const Eigen::VectorXd& y, const RowMatrix& F,
                  const std::vector<std::string>& models, const Hyperparameters& hyper,
                  std::uint64_t seed) {
  if (X.rows() != y.size() || F.rows() != y.size() || X.rows() < 1)
    throw ContractError("X, y and F need the same, nonzero, number of rows");
  if (static_cast<std::size_t>(F.cols()) != models.size() || models.empty())
    throw ContractError("one model identifier per column of F is required");
  if (hyper.K != static_cast<int>(models.size()))
    throw ContractError("K does not match the number of models");
  std::vector<Eigen::Index> bad;
  for (Eigen::Index i = 0; i < F.rows(); ++i)
    if (!F.row(i).allFinite()) bad.push_back(i);
  if (!bad.empty()) {
    std::ostringstream msg;
    msg << "missing model output at observation row(s)";
    for (std::size_t k = 0; k < bad.size() && k < 20; ++k) msg << ' ' << bad[k] + 1;
    if (bad.size() > 20) msg << " ... (" << bad.size() << " rows)";
    throw IngestionError(msg.str());
  }
  if (!X.allFinite() || !y.allFinite()) throw IngestionError("non-finite value in the training data");
  hyper.validate();

  FitResult out;
  Posterior& post = out.posterior;
  post.mode = FitMode::Mixing;
  post.hyper = hyper;
  post.seed = seed;
  post.models = models;
  post.scaling = InputScaling::from_data(X);
  post.grid = CutpointGrid::uniform(static_cast<std::size_t>(X.cols()), hyper.n_cut);

  ModelData data{post.scaling.apply(X), y, F};
  SamplerConfig cfg;
  cfg.m = hyper.m;
  cfg.grid = post.grid;
  cfg.tree = hyper.tree;
  cfg.bandwidth = hyper.bandwidth;
  cfg.leaf = tau_and_prior_mean(hyper, std::nullopt);
  cfg.nu = hyper.nu;
  cfg.lambda = std::isnan(hyper.lambda)
                   ? lambda_from_mode(least_squares_sigma2(F, y, false), hyper.nu)
                   : hyper.lambda;
  out.lambda = cfg.lambda;
  out.tau = cfg.leaf.tau;
  post.hyper.lambda = cfg.lambda;

  auto result = run_mcmc(data, cfg, hyper.schedule, seed);
  post.draws = std::move(result.draws);
  out.report = std::move(result.report);
  return out;
}

WeightDraws weights_at(const Posterior& post, const RowMatrix& X, int threads) {
  if (post.mode != FitMode::Mixing) throw ContractError("not a mixing fit");
  return draw_outputs(post, X, threads);
}

Eigen::MatrixXd mixed_prediction(const WeightDraws& weights, const RowMatrix& F) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(weights.size()), F.rows());
  for (std::size_t d = 0; d < weights.size(); ++d) {
    const auto& W = weights[d];
    if (W.rows() != F.rows() || W.cols() != F.cols())
      throw ContractError("model outputs do not align with the weights");
    out.row(static_cast<Eigen::Index>(d)) = W.cwiseProduct(F).rowwise().sum().transpose();
  }
  return out;
}

Eigen::MatrixXd sum_of_weights(const WeightDraws& weights) {
  const Eigen::Index n = weights.empty() ? 0 : weights.front().rows();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(weights.size()), n);
  for (std::size_t d = 0; d < weights.size(); ++d) {
    if (weights[d].rows() != n) throw ContractError("weight draws differ in size");
    out.row(static_cast<Eigen::Index>(d)) = weights[d].rowwise().sum().transpose();
  }
  return out;
}

}  // namespace rpbart
