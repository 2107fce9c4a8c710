#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rpbart/random_path.hpp"
#include "rpbart/rng.hpp"
#include "rpbart/tree.hpp"

namespace rpbart {

/// Row-major so that a row (one observation) is a contiguous span.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::span<const double> row_span(const RowMatrix& m, Eigen::Index i) {
  return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
}

struct McmcSchedule {
  int burn = 1000;
  int draws = 1000;
  int thin = 1;
  /// Sweeps during which the bandwidth step size adapts; -1 means "burn".
  int adapt = -1;
};

struct Hyperparameters {
  int m = 20;
  double k = 1.0;
  TreePrior tree;
  BandwidthPrior bandwidth;
  double nu = 3.0;
  /// Scale of the error-variance prior; NaN means "calibrate from data".
  double lambda = std::numeric_limits<double>::quiet_NaN();
  int K = 1;
  std::size_t n_cut = 100;
  McmcSchedule schedule;
  void validate() const;
};

/// Terminal-node prior N(mean, tau^2 I).
struct LeafPrior {
  double tau = 1.0;
  Eigen::VectorXd mean;
};

/// Regression: tau = (y_max - y_min) / (2 k sqrt(m)), mean 0. Mixing
/// (y_range absent): tau = 1 / (2 k sqrt(m)), mean 1/(m K) per coordinate.
LeafPrior tau_and_prior_mean(const Hyperparameters& hyper,
                             std::optional<std::pair<double, double>> y_range);

/// Scale that puts the mode nu lambda / (nu + 2) of the error-variance prior at sigma_hat2.
double lambda_from_mode(double sigma_hat2, double nu);

/// Data in the sampler's frame: X rescaled to [0,1]^p, the response, and
/// the n x K basis F (a column of ones for plain regression).
struct ModelData {
  RowMatrix X;
  Eigen::VectorXd y;
  RowMatrix F;
  std::size_t n() const { return static_cast<std::size_t>(X.rows()); }
  std::size_t p() const { return static_cast<std::size_t>(X.cols()); }
  std::size_t K() const { return static_cast<std::size_t>(F.cols()); }
  void validate() const;
};

struct UpdateFlags {
  bool topology = true;
  bool assignments = true;
  bool leaves = true;
  bool bandwidth = true;
  bool sigma2 = true;
};

struct SamplerConfig {
  int m = 20;
  CutpointGrid grid;
  TreePrior tree;
  BandwidthPrior bandwidth;
  LeafPrior leaf;
  double nu = 3.0;
  double lambda = 1.0;
  UpdateFlags flags;
  double initial_log_step = std::log(0.5);
  void validate() const;
};

/// Unknowns of one tree. z holds each observation's leaf index.
struct TreeState {
  Tree tree;
  Eigen::MatrixXd leaves;  // B x K
  double gamma = 0.5;
  std::vector<int> z;
  double log_step = std::log(0.5);
};

struct EnsembleState {
  std::vector<TreeState> trees;
  double sigma2 = 1.0;
};

/// Tree part of a retained draw; enough for prediction.
struct TreeDraw {
  Tree tree;
  Eigen::MatrixXd leaves;
  double gamma = 0.5;
};

struct PosteriorDraw {
  std::vector<TreeDraw> trees;
  double sigma2 = 1.0;
  std::size_t index = 0;
};

struct MoveCounts {
  std::size_t proposed = 0;
  std::size_t accepted = 0;
  double rate() const { return proposed ? static_cast<double>(accepted) / proposed : 0.0; }
};

struct SamplerStats {
  MoveCounts birth;
  MoveCounts death;
  MoveCounts bandwidth;
  /// Failed attempts to find any topology move.
  std::size_t no_move = 0;
  /// K x K solves done by the terminal-parameter Gibbs step.
  std::size_t leaf_solves = 0;
};

/// Log marginal likelihood of one node's residuals with its parameter
/// integrated against N(mean, tau^2 I). Sufficient statistics form.
struct NodeStats {
  explicit NodeStats(std::size_t K)
      : ff(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(K))),
        fr(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(K))) {}
  void add(std::span<const double> f, double r);
  std::size_t n = 0;
  Eigen::MatrixXd ff;
  Eigen::VectorXd fr;
  double rr = 0.0;
};
double log_node_evidence(const NodeStats& s, const LeafPrior& prior, double sigma2);
/// Draw from the conditional posterior of a node's parameter vector.
Eigen::VectorXd draw_node_params(const NodeStats& s, const LeafPrior& prior, double sigma2,
                                 Rng& rng);

/// Backfitting MCMC over (T_j, M_j, Z_j, gamma_j) and sigma^2.
///
/// The same code path handles regression (F = ones, K = 1) and model
/// mixing (F = model outputs). Per sweep and tree: remove the tree's fit,
/// topology, assignments, terminal parameters, bandwidth, re-add the fit;
/// then sigma^2. One Sampler is one chain and is not thread safe.
class Sampler {
 public:
  Sampler(ModelData data, SamplerConfig config, std::uint64_t seed);

  /// Root-only trees at the prior mean, gamma at its prior mean, sigma2 = lambda.
  void initialize();
  /// Replace the state (e.g. with a prior draw) and rebuild the residuals.
  void set_state(EnsembleState state);
  /// Replace the response and rebuild the residuals.
  void set_response(const Eigen::VectorXd& y);

  void sweep(bool adapt = false);

  void update_tree_topology(std::size_t j);
  void update_assignments(std::size_t j);
  void update_terminal_params(std::size_t j);
  void update_bandwidth(std::size_t j);
  void update_sigma2();

  /// residual += fit of tree j (so residuals exclude it) / residual -= fit.
  void remove_fit(std::size_t j);
  void add_fit(std::size_t j);

  /// Largest |residual - (y - total fit)|; only valid with all fits added.
  double residual_drift() const;

  PosteriorDraw snapshot(std::size_t index) const;

  const EnsembleState& state() const { return state_; }
  const Eigen::VectorXd& residuals() const { return residual_; }
  const ModelData& data() const { return data_; }
  const SamplerConfig& config() const { return config_; }
  SamplerStats& stats() { return stats_; }
  const SamplerStats& stats() const { return stats_; }
  Rng& rng() { return rng_; }

 private:
  double fit_value(const TreeState& t, std::size_t i) const;
  double log_bandwidth_target(const TreeState& t, double gamma) const;
  void rebuild_residuals();

  ModelData data_;
  SamplerConfig config_;
  Rng rng_;
  EnsembleState state_;
  Eigen::VectorXd residual_;
  SamplerStats stats_;
  bool adapting_ = false;
  std::vector<int> adapt_calls_;
  std::vector<int> adapt_accepts_;
  std::vector<int> adapt_batches_;
};

/// Draw every unknown from the prior for inputs X (n x p, rescaled).
EnsembleState draw_prior_state(const SamplerConfig& config, const RowMatrix& X, std::size_t K,
                               Rng& rng);

/// y_i = f_i' sum_j mu_{z_ij j} + N(0, sigma2).
Eigen::VectorXd simulate_response(const EnsembleState& state, const RowMatrix& F, Rng& rng);

struct McmcReport {
  SamplerStats stats;
  std::vector<double> sigma2_trace;
  double seconds = 0.0;
};

struct McmcResult {
  std::vector<PosteriorDraw> draws;
  McmcReport report;
};

/// Runs burn-in then retains every `thin`-th sweep. Deterministic given seed.
McmcResult run_mcmc(const ModelData& data, const SamplerConfig& config,
                    const McmcSchedule& schedule, std::uint64_t seed);

/// Sum of the smooth tree outputs for every row of X: an n x K matrix.
Eigen::MatrixXd ensemble_mean(const PosteriorDraw& draw, const CutpointGrid& grid, double q,
                              const RowMatrix& X);

/// Pointwise posterior mean and equal-tailed 95% interval across draws.
struct PointSummary {
  Eigen::VectorXd mean;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};
/// per_draw is draws x points.
PointSummary summarize(const Eigen::MatrixXd& per_draw, double level = 0.95);

/// Type-7 sample quantile of an unsorted sample.
double quantile(std::vector<double> sample, double prob);

}  // namespace rpbart
