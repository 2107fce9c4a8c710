#include "rpbart/model.hpp"

#include <algorithm>
#include <thread>

#include "rpbart/errors.hpp"

namespace rpbart {

InputScaling InputScaling::from_data(const RowMatrix& X) {
  InputScaling s;
  s.lower.resize(static_cast<std::size_t>(X.cols()));
  s.upper.resize(static_cast<std::size_t>(X.cols()));
  for (Eigen::Index v = 0; v < X.cols(); ++v) {
    s.lower[static_cast<std::size_t>(v)] = X.rows() ? X.col(v).minCoeff() : 0.0;
    s.upper[static_cast<std::size_t>(v)] = X.rows() ? X.col(v).maxCoeff() : 1.0;
  }
  return s;
}

RowMatrix InputScaling::apply(const RowMatrix& X) const {
  if (static_cast<std::size_t>(X.cols()) != dims())
    throw ContractError("input has " + std::to_string(X.cols()) + " columns, model expects " +
                        std::to_string(dims()));
  RowMatrix out(X.rows(), X.cols());
  for (Eigen::Index v = 0; v < X.cols(); ++v) {
    const double lo = lower[static_cast<std::size_t>(v)];
    const double span = upper[static_cast<std::size_t>(v)] - lo;
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      out(i, v) = span > 0.0 ? std::clamp((X(i, v) - lo) / span, 0.0, 1.0) : 0.0;
  }
  return out;
}

double least_squares_sigma2(const RowMatrix& design, const Eigen::VectorXd& y, bool intercept) {
  const Eigen::Index n = y.size();
  Eigen::MatrixXd A(n, design.cols() + (intercept ? 1 : 0));
  if (intercept) A.col(0).setOnes();
  A.rightCols(design.cols()) = design;
  const Eigen::Index dof = n - A.cols();
  double s2 = 0.0;
  if (dof > 0) {
    const Eigen::VectorXd beta = A.colPivHouseholderQr().solve(y);
    s2 = (y - A * beta).squaredNorm() / static_cast<double>(dof);
  }
  if (!(s2 > 0.0) && n > 1) s2 = (y.array() - y.mean()).square().sum() / static_cast<double>(n - 1);
  if (!(s2 > 0.0)) s2 = 1.0;
  return s2;
}

FitResult fit_regression(const RowMatrix& X, const Eigen::VectorXd& y, const Hyperparameters& hyper,
                         std::uint64_t seed) {
  hyper.validate();
  if (hyper.K != 1) throw ContractError("regression uses K = 1");
  if (X.rows() != y.size() || X.rows() < 1) throw ContractError("X and y need the same, nonzero, length");
  if (!X.allFinite() || !y.allFinite()) throw IngestionError("non-finite value in the training data");

  const double ymin = y.minCoeff();
  const double ymax = y.maxCoeff();
  FitResult out;
  Posterior& post = out.posterior;
  post.mode = FitMode::Regression;
  post.hyper = hyper;
  post.seed = seed;
  post.scaling = InputScaling::from_data(X);
  post.grid = CutpointGrid::uniform(static_cast<std::size_t>(X.cols()), hyper.n_cut);
  post.y_offset = 0.5 * (ymin + ymax);

  ModelData data;
  data.X = post.scaling.apply(X);
  data.y = y.array() - post.y_offset;
  data.F = RowMatrix::Ones(X.rows(), 1);

  SamplerConfig cfg;
  cfg.m = hyper.m;
  cfg.grid = post.grid;
  cfg.tree = hyper.tree;
  cfg.bandwidth = hyper.bandwidth;
  // A constant response has no range; fall back to a unit range.
  cfg.leaf = tau_and_prior_mean(hyper, std::pair{ymin, ymax > ymin ? ymax : ymin + 1.0});
  cfg.nu = hyper.nu;
  cfg.lambda = std::isnan(hyper.lambda)
                   ? lambda_from_mode(least_squares_sigma2(data.X, data.y, true), hyper.nu)
                   : hyper.lambda;
  out.lambda = cfg.lambda;
  out.tau = cfg.leaf.tau;
  post.hyper.lambda = cfg.lambda;

  auto result = run_mcmc(data, cfg, hyper.schedule, seed);
  post.draws = std::move(result.draws);
  out.report = std::move(result.report);
  return out;
}

std::vector<Eigen::MatrixXd> draw_outputs(const Posterior& post, const RowMatrix& X, int threads) {
  const RowMatrix Xs = post.scaling.apply(X);
  const Eigen::Index n = Xs.rows();
  std::vector<Eigen::MatrixXd> out(post.draws.size(),
                                   Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(post.K())));
  const double q = post.hyper.bandwidth.q;
  auto work = [&](Eigen::Index begin, Eigen::Index end) {
    if (begin >= end) return;
    const RowMatrix block = Xs.middleRows(begin, end - begin);
    for (std::size_t d = 0; d < post.draws.size(); ++d)
      out[d].middleRows(begin, end - begin) = ensemble_mean(post.draws[d], post.grid, q, block);
  };
  const auto workers = static_cast<Eigen::Index>(std::max(1, threads));
  if (workers == 1 || n < 2 * workers) {
    work(0, n);
    return out;
  }
  std::vector<std::thread> pool;
  const Eigen::Index chunk = (n + workers - 1) / workers;
  for (Eigen::Index w = 0; w < workers; ++w)
    pool.emplace_back(work, w * chunk, std::min(n, (w + 1) * chunk));
  for (auto& t : pool) t.join();
  return out;
}

Eigen::MatrixXd predict_draws(const Posterior& post, const RowMatrix& X, int threads) {
  if (post.mode != FitMode::Regression) throw ContractError("not a regression fit");
  const auto outputs = draw_outputs(post, X, threads);
  Eigen::MatrixXd pred(static_cast<Eigen::Index>(outputs.size()), X.rows());
  for (std::size_t d = 0; d < outputs.size(); ++d)
    pred.row(static_cast<Eigen::Index>(d)) = (outputs[d].col(0).array() + post.y_offset).matrix().transpose();
  return pred;
}

}  // namespace rpbart
