#include "rpbart/sampler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>

#include "rpbart/errors.hpp"

namespace rpbart {

namespace {

constexpr double kTargetAcceptance = 0.44;
constexpr int kAdaptBatch = 50;

}  // namespace

void Hyperparameters::validate() const {
  if (m < 1) throw ContractError("m must be >= 1");
  if (!(k > 0.0)) throw ContractError("k must be > 0");
  if (!(nu > 0.0)) throw ContractError("nu must be > 0");
  if (!std::isnan(lambda) && !(lambda > 0.0)) throw ContractError("lambda must be > 0");
  if (K < 1) throw ContractError("K must be >= 1");
  if (n_cut < 1) throw ContractError("n_cut must be >= 1");
  if (schedule.burn < 0 || schedule.draws < 0 || schedule.thin < 1)
    throw ContractError("MCMC schedule needs burn >= 0, draws >= 0, thin >= 1");
  tree.validate();
  bandwidth.validate();
}

LeafPrior tau_and_prior_mean(const Hyperparameters& hyper,
                             std::optional<std::pair<double, double>> y_range) {
  const double root_m = std::sqrt(static_cast<double>(hyper.m));
  LeafPrior prior;
  if (y_range) {
    const auto [lo, hi] = *y_range;
    if (!(hi > lo)) throw ContractError("response range must satisfy y_max > y_min");
    prior.tau = (hi - lo) / (2.0 * hyper.k * root_m);
    prior.mean = Eigen::VectorXd::Zero(1);
  } else {
    prior.tau = 1.0 / (2.0 * hyper.k * root_m);
    prior.mean = Eigen::VectorXd::Constant(hyper.K, 1.0 / (hyper.m * static_cast<double>(hyper.K)));
  }
  return prior;
}

double lambda_from_mode(double sigma_hat2, double nu) {
  if (!(sigma_hat2 > 0.0) || !(nu > 0.0)) throw ContractError("sigma_hat2 and nu must be > 0");
  return sigma_hat2 * (nu + 2.0) / nu;
}

void ModelData::validate() const {
  if (X.rows() != y.size() || F.rows() != y.size())
    throw ContractError("X, y and F must have the same number of rows");
  if (X.cols() < 1 || F.cols() < 1) throw ContractError("X and F need at least one column");
  if (!X.allFinite() || !y.allFinite() || !F.allFinite())
    throw IngestionError("non-finite value in the training data");
}

void SamplerConfig::validate() const {
  if (m < 1) throw ContractError("m must be >= 1");
  if (!(leaf.tau > 0.0)) throw ContractError("tau must be > 0");
  if (!(nu > 0.0) || !(lambda > 0.0)) throw ContractError("nu and lambda must be > 0");
  tree.validate();
  bandwidth.validate();
}

void NodeStats::add(std::span<const double> f, double r) {
  const Eigen::Map<const Eigen::VectorXd> fv(f.data(), static_cast<Eigen::Index>(f.size()));
  ++n;
  ff.noalias() += fv * fv.transpose();
  fr.noalias() += fv * r;
  rr += r * r;
}

namespace {

struct Posterior {
  Eigen::LLT<Eigen::MatrixXd> llt;
  Eigen::VectorXd b;
};

Posterior node_posterior(const NodeStats& s, const LeafPrior& prior, double sigma2) {
  const auto K = prior.mean.size();
  const double tau2 = prior.tau * prior.tau;
  Eigen::MatrixXd precision = s.ff / sigma2;
  precision.diagonal().array() += 1.0 / tau2;
  Posterior post{Eigen::LLT<Eigen::MatrixXd>(precision), prior.mean / tau2 + s.fr / sigma2};
  if (post.llt.info() != Eigen::Success || precision.rows() != K)
    throw Error("terminal-node posterior precision is not positive definite");
  return post;
}

}  // namespace

double log_node_evidence(const NodeStats& s, const LeafPrior& prior, double sigma2) {
  const auto K = static_cast<double>(prior.mean.size());
  const double tau2 = prior.tau * prior.tau;
  const Posterior post = node_posterior(s, prior, sigma2);
  const Eigen::MatrixXd L = post.llt.matrixL();
  const double logdet = 2.0 * L.diagonal().array().log().sum();
  const double n = static_cast<double>(s.n);
  return -0.5 * n * std::log(2.0 * std::numbers::pi * sigma2) - 0.5 * s.rr / sigma2 -
         0.5 * K * std::log(tau2) - 0.5 * prior.mean.squaredNorm() / tau2 - 0.5 * logdet +
         0.5 * post.b.dot(post.llt.solve(post.b));
}

Eigen::VectorXd draw_node_params(const NodeStats& s, const LeafPrior& prior, double sigma2,
                                 Rng& rng) {
  const Posterior post = node_posterior(s, prior, sigma2);
  Eigen::VectorXd z(prior.mean.size());
  for (Eigen::Index l = 0; l < z.size(); ++l) z(l) = rng.normal();
  // precision = L L'; a draw is mean + L'^{-1} z.
  return post.llt.solve(post.b) + post.llt.matrixU().solve(z);
}

Sampler::Sampler(ModelData data, SamplerConfig config, std::uint64_t seed)
    : data_(std::move(data)), config_(std::move(config)), rng_(seed) {
  data_.validate();
  config_.validate();
  if (static_cast<std::size_t>(config_.leaf.mean.size()) != data_.K())
    throw ContractError("leaf prior mean length must equal the number of basis columns");
  if (config_.grid.dims() != data_.p()) throw ContractError("cutpoint grid dimension mismatch");
  initialize();
}

void Sampler::initialize() {
  state_.trees.assign(static_cast<std::size_t>(config_.m), TreeState{});
  const double gamma0 = config_.bandwidth.a1 / (config_.bandwidth.a1 + config_.bandwidth.a2);
  for (auto& t : state_.trees) {
    t.tree = Tree();
    t.leaves = config_.leaf.mean.transpose();
    t.gamma = gamma0;
    t.z.assign(data_.n(), 0);
    t.log_step = config_.initial_log_step;
  }
  state_.sigma2 = config_.lambda;
  adapt_calls_.assign(state_.trees.size(), 0);
  adapt_accepts_.assign(state_.trees.size(), 0);
  adapt_batches_.assign(state_.trees.size(), 0);
  rebuild_residuals();
}

void Sampler::set_state(EnsembleState state) {
  if (state.trees.size() != static_cast<std::size_t>(config_.m))
    throw ContractError("state has the wrong number of trees");
  for (const auto& t : state.trees) {
    if (t.z.size() != data_.n() || static_cast<std::size_t>(t.leaves.rows()) != t.tree.num_leaves() ||
        static_cast<std::size_t>(t.leaves.cols()) != data_.K())
      throw ContractError("tree state is inconsistent with the data");
  }
  state_ = std::move(state);
  rebuild_residuals();
}

void Sampler::set_response(const Eigen::VectorXd& y) {
  if (y.size() != data_.y.size()) throw ContractError("response length mismatch");
  data_.y = y;
  rebuild_residuals();
}

double Sampler::fit_value(const TreeState& t, std::size_t i) const {
  const auto row = data_.F.row(static_cast<Eigen::Index>(i));
  return row.dot(t.leaves.row(t.z[i]));
}

void Sampler::rebuild_residuals() {
  residual_ = data_.y;
  for (const auto& t : state_.trees)
    for (std::size_t i = 0; i < data_.n(); ++i) residual_(static_cast<Eigen::Index>(i)) -= fit_value(t, i);
}

double Sampler::residual_drift() const {
  Eigen::VectorXd fresh = data_.y;
  for (const auto& t : state_.trees)
    for (std::size_t i = 0; i < data_.n(); ++i) fresh(static_cast<Eigen::Index>(i)) -= fit_value(t, i);
  return (fresh - residual_).cwiseAbs().maxCoeff();
}

void Sampler::remove_fit(std::size_t j) {
  const auto& t = state_.trees.at(j);
  for (std::size_t i = 0; i < data_.n(); ++i) residual_(static_cast<Eigen::Index>(i)) += fit_value(t, i);
}

void Sampler::add_fit(std::size_t j) {
  const auto& t = state_.trees.at(j);
  for (std::size_t i = 0; i < data_.n(); ++i) residual_(static_cast<Eigen::Index>(i)) -= fit_value(t, i);
}

void Sampler::sweep(bool adapt) {
  adapting_ = adapt;
  const UpdateFlags& f = config_.flags;
  for (std::size_t j = 0; j < state_.trees.size(); ++j) {
    remove_fit(j);
    if (f.topology) update_tree_topology(j);
    if (f.assignments) update_assignments(j);
    if (f.leaves) update_terminal_params(j);
    if (f.bandwidth) update_bandwidth(j);
    add_fit(j);
  }
  if (f.sigma2) update_sigma2();
  adapting_ = false;
}

void Sampler::update_tree_topology(std::size_t j) {
  TreeState& t = state_.trees.at(j);
  auto prop = propose_move(t.tree, config_.grid, rng_);
  if (!prop) {
    ++stats_.no_move;
    return;
  }
  const std::size_t K = data_.K();
  const double sigma2 = state_.sigma2;
  const double log_prior_ratio = log_tree_prior(prop->tree, config_.tree, config_.grid) -
                                 log_tree_prior(t.tree, config_.tree, config_.grid);
  const double log_proposal_ratio = prop->log_reverse - prop->log_forward;
  const int b = prop->leaf;

  if (prop->kind == MoveKind::Birth) {
    ++stats_.birth.proposed;
    const SplitRule rule = prop->tree.rule(prop->node);
    const auto v = static_cast<std::size_t>(rule.var);
    const Interval iv = node_bounds(t.tree, config_.grid, prop->node)[v];
    const double cut = config_.grid.cut(v, rule.cut);

    NodeStats parent(K), left(K), right(K);
    std::vector<std::pair<std::size_t, bool>> moved;
    for (std::size_t i = 0; i < data_.n(); ++i) {
      if (t.z[i] != b) continue;
      const auto ii = static_cast<Eigen::Index>(i);
      const double psi = split_prob(data_.X(ii, static_cast<Eigen::Index>(v)), cut, iv, t.gamma,
                                    config_.bandwidth.q);
      const bool goes_right = rng_.uniform() < psi;
      const auto f = row_span(data_.F, ii);
      parent.add(f, residual_(ii));
      (goes_right ? right : left).add(f, residual_(ii));
      moved.emplace_back(i, goes_right);
    }
    const double log_alpha = log_node_evidence(left, config_.leaf, sigma2) +
                             log_node_evidence(right, config_.leaf, sigma2) -
                             log_node_evidence(parent, config_.leaf, sigma2) + log_prior_ratio +
                             log_proposal_ratio;
    if (std::log(rng_.uniform_open()) >= log_alpha) return;

    ++stats_.birth.accepted;
    for (int& zi : t.z)
      if (zi > b) ++zi;
    for (const auto& [i, goes_right] : moved) t.z[i] = goes_right ? b + 1 : b;
    Eigen::MatrixXd leaves(t.leaves.rows() + 1, t.leaves.cols());
    leaves.topRows(b) = t.leaves.topRows(b);
    leaves.row(b) = draw_node_params(left, config_.leaf, sigma2, rng_).transpose();
    leaves.row(b + 1) = draw_node_params(right, config_.leaf, sigma2, rng_).transpose();
    leaves.bottomRows(t.leaves.rows() - b - 1) = t.leaves.bottomRows(t.leaves.rows() - b - 1);
    t.leaves = std::move(leaves);
    t.tree = std::move(prop->tree);
    return;
  }

  ++stats_.death.proposed;
  NodeStats merged(K), left(K), right(K);
  for (std::size_t i = 0; i < data_.n(); ++i) {
    if (t.z[i] != b && t.z[i] != b + 1) continue;
    const auto ii = static_cast<Eigen::Index>(i);
    const auto f = row_span(data_.F, ii);
    merged.add(f, residual_(ii));
    (t.z[i] == b ? left : right).add(f, residual_(ii));
  }
  const double log_alpha = log_node_evidence(merged, config_.leaf, sigma2) -
                           log_node_evidence(left, config_.leaf, sigma2) -
                           log_node_evidence(right, config_.leaf, sigma2) + log_prior_ratio +
                           log_proposal_ratio;
  if (std::log(rng_.uniform_open()) >= log_alpha) return;

  ++stats_.death.accepted;
  for (int& zi : t.z)
    if (zi > b) --zi;
  Eigen::MatrixXd leaves(t.leaves.rows() - 1, t.leaves.cols());
  leaves.topRows(b) = t.leaves.topRows(b);
  leaves.row(b) = draw_node_params(merged, config_.leaf, sigma2, rng_).transpose();
  leaves.bottomRows(t.leaves.rows() - b - 2) = t.leaves.bottomRows(t.leaves.rows() - b - 2);
  t.leaves = std::move(leaves);
  t.tree = std::move(prop->tree);
}

void Sampler::update_assignments(std::size_t j) {
  TreeState& t = state_.trees.at(j);
  const std::size_t B = t.tree.num_leaves();
  if (B == 1) {
    std::fill(t.z.begin(), t.z.end(), 0);
    return;
  }
  std::vector<double> phi(B);
  for (std::size_t i = 0; i < data_.n(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    path_probs(t.tree, config_.grid, t.gamma, config_.bandwidth.q, row_span(data_.X, ii), phi);
    const auto p = assignment_full_conditional(phi, residual_(ii), t.leaves, row_span(data_.F, ii),
                                               state_.sigma2);
    t.z[i] = sample_assignment(p, rng_);
  }
}

void Sampler::update_terminal_params(std::size_t j) {
  TreeState& t = state_.trees.at(j);
  const std::size_t B = t.tree.num_leaves();
  std::vector<NodeStats> stats(B, NodeStats(data_.K()));
  for (std::size_t i = 0; i < data_.n(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    stats[static_cast<std::size_t>(t.z[i])].add(row_span(data_.F, ii), residual_(ii));
  }
  for (std::size_t b = 0; b < B; ++b) {
    t.leaves.row(static_cast<Eigen::Index>(b)) =
        draw_node_params(stats[b], config_.leaf, state_.sigma2, rng_).transpose();
    ++stats_.leaf_solves;
  }
}

double Sampler::log_bandwidth_target(const TreeState& t, double gamma) const {
  const BandwidthPrior& bp = config_.bandwidth;
  double lp = (bp.a1 - 1.0) * std::log(gamma) + (bp.a2 - 1.0) * std::log1p(-gamma);
  if (t.tree.num_leaves() == 1) return lp;
  const auto boxes = all_index_bounds(t.tree, config_.grid);
  for (std::size_t i = 0; i < data_.n(); ++i) {
    const auto x = row_span(data_.X, static_cast<Eigen::Index>(i));
    Tree::NodeId child = t.tree.leaves()[static_cast<std::size_t>(t.z[i])];
    for (Tree::NodeId p = t.tree.parent(child); p >= 0; child = p, p = t.tree.parent(p)) {
      const SplitRule& r = t.tree.rule(p);
      const auto v = static_cast<std::size_t>(r.var);
      const auto& box = boxes[static_cast<std::size_t>(p)][v];
      const Interval iv{config_.grid.bound_value(v, box.first), config_.grid.bound_value(v, box.second)};
      const double psi = split_prob(x[v], config_.grid.cut(v, r.cut), iv, gamma, bp.q);
      const double step = t.tree.right(p) == child ? psi : 1.0 - psi;
      if (step <= 0.0) return -std::numeric_limits<double>::infinity();
      lp += std::log(step);
    }
  }
  return lp;
}

void Sampler::update_bandwidth(std::size_t j) {
  TreeState& t = state_.trees.at(j);
  const double eta = std::log(t.gamma) - std::log1p(-t.gamma);
  const double eta_new = eta + std::exp(t.log_step) * rng_.normal();
  const double gamma_new = 1.0 / (1.0 + std::exp(-eta_new));
  ++stats_.bandwidth.proposed;
  bool accepted = false;
  if (gamma_new > 0.0 && gamma_new < 1.0) {
    // Random walk on the logit scale: the Jacobian is gamma (1 - gamma).
    const double log_alpha = log_bandwidth_target(t, gamma_new) - log_bandwidth_target(t, t.gamma) +
                             std::log(gamma_new) + std::log1p(-gamma_new) - std::log(t.gamma) -
                             std::log1p(-t.gamma);
    if (std::log(rng_.uniform_open()) < log_alpha) {
      t.gamma = gamma_new;
      accepted = true;
      ++stats_.bandwidth.accepted;
    }
  }
  if (!adapting_) return;
  adapt_accepts_[j] += accepted ? 1 : 0;
  if (++adapt_calls_[j] < kAdaptBatch) return;
  const double rate = static_cast<double>(adapt_accepts_[j]) / kAdaptBatch;
  const int batch = ++adapt_batches_[j];
  const double delta = std::min(0.1, 1.0 / std::sqrt(static_cast<double>(batch)));
  t.log_step += rate > kTargetAcceptance ? delta : -delta;
  adapt_calls_[j] = 0;
  adapt_accepts_[j] = 0;
}

void Sampler::update_sigma2() {
  const double n = static_cast<double>(data_.n());
  const double scale = config_.nu * config_.lambda + residual_.squaredNorm();
  state_.sigma2 = scale / rng_.chi_square(config_.nu + n);
}

PosteriorDraw Sampler::snapshot(std::size_t index) const {
  PosteriorDraw d;
  d.sigma2 = state_.sigma2;
  d.index = index;
  d.trees.reserve(state_.trees.size());
  for (const auto& t : state_.trees) d.trees.push_back(TreeDraw{t.tree, t.leaves, t.gamma});
  return d;
}

EnsembleState draw_prior_state(const SamplerConfig& config, const RowMatrix& X, std::size_t K,
                               Rng& rng) {
  if (static_cast<std::size_t>(config.leaf.mean.size()) != K)
    throw ContractError("leaf prior mean length must equal K");
  EnsembleState s;
  s.trees.resize(static_cast<std::size_t>(config.m));
  for (auto& t : s.trees) {
    t.tree = draw_tree_prior(config.tree, config.grid, rng);
    t.gamma = rng.beta(config.bandwidth.a1, config.bandwidth.a2);
    const auto B = static_cast<Eigen::Index>(t.tree.num_leaves());
    t.leaves.resize(B, static_cast<Eigen::Index>(K));
    for (Eigen::Index b = 0; b < B; ++b)
      for (Eigen::Index l = 0; l < static_cast<Eigen::Index>(K); ++l)
        t.leaves(b, l) = rng.normal(config.leaf.mean(l), config.leaf.tau);
    t.z.resize(static_cast<std::size_t>(X.rows()));
    std::vector<double> phi(t.tree.num_leaves());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      path_probs(t.tree, config.grid, t.gamma, config.bandwidth.q, row_span(X, i), phi);
      t.z[static_cast<std::size_t>(i)] = sample_assignment(phi, rng);
    }
    t.log_step = config.initial_log_step;
  }
  s.sigma2 = config.nu * config.lambda / rng.chi_square(config.nu);
  return s;
}

Eigen::VectorXd simulate_response(const EnsembleState& state, const RowMatrix& F, Rng& rng) {
  Eigen::VectorXd y = Eigen::VectorXd::Zero(F.rows());
  const double sd = std::sqrt(state.sigma2);
  for (Eigen::Index i = 0; i < F.rows(); ++i) {
    for (const auto& t : state.trees) y(i) += F.row(i).dot(t.leaves.row(t.z[static_cast<std::size_t>(i)]));
    y(i) += sd * rng.normal();
  }
  return y;
}

McmcResult run_mcmc(const ModelData& data, const SamplerConfig& config,
                    const McmcSchedule& schedule, std::uint64_t seed) {
  if (schedule.burn < 0 || schedule.draws < 0 || schedule.thin < 1)
    throw ContractError("MCMC schedule needs burn >= 0, draws >= 0, thin >= 1");
  const auto start = std::chrono::steady_clock::now();
  Sampler sampler(data, config, seed);
  const int adapt_len = std::min(schedule.adapt < 0 ? schedule.burn : schedule.adapt, schedule.burn);
  const int total = schedule.burn + schedule.draws * schedule.thin;

  McmcResult result;
  result.draws.reserve(static_cast<std::size_t>(schedule.draws));
  result.report.sigma2_trace.reserve(static_cast<std::size_t>(total));
  for (int it = 0; it < total; ++it) {
    sampler.sweep(it < adapt_len);
    result.report.sigma2_trace.push_back(sampler.state().sigma2);
    if (it >= schedule.burn && (it - schedule.burn) % schedule.thin == schedule.thin - 1)
      result.draws.push_back(sampler.snapshot(result.draws.size()));
  }
  result.report.stats = sampler.stats();
  result.report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

Eigen::MatrixXd ensemble_mean(const PosteriorDraw& draw, const CutpointGrid& grid, double q,
                              const RowMatrix& X) {
  if (static_cast<std::size_t>(X.cols()) != grid.dims())
    throw ContractError("input dimension does not match the model");
  const Eigen::Index K = draw.trees.empty() ? 1 : draw.trees.front().leaves.cols();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(X.rows(), K);
  std::vector<double> phi;
  for (const auto& t : draw.trees) {
    phi.resize(t.tree.num_leaves());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      path_probs(t.tree, grid, t.gamma, q, row_span(X, i), phi);
      for (std::size_t b = 0; b < phi.size(); ++b)
        if (phi[b] > 0.0) out.row(i) += phi[b] * t.leaves.row(static_cast<Eigen::Index>(b));
    }
  }
  return out;
}

double quantile(std::vector<double> sample, double prob) {
  if (sample.empty()) throw ContractError("quantile of an empty sample");
  std::sort(sample.begin(), sample.end());
  const double h = (static_cast<double>(sample.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sample.size() - 1);
  return sample[lo] + (h - static_cast<double>(lo)) * (sample[hi] - sample[lo]);
}

PointSummary summarize(const Eigen::MatrixXd& per_draw, double level) {
  const Eigen::Index points = per_draw.cols();
  PointSummary s{Eigen::VectorXd(points), Eigen::VectorXd(points), Eigen::VectorXd(points)};
  const double tail = 0.5 * (1.0 - level);
  std::vector<double> col(static_cast<std::size_t>(per_draw.rows()));
  for (Eigen::Index c = 0; c < points; ++c) {
    for (Eigen::Index r = 0; r < per_draw.rows(); ++r) col[static_cast<std::size_t>(r)] = per_draw(r, c);
    s.mean(c) = per_draw.col(c).mean();
    s.lower(c) = quantile(col, tail);
    s.upper(c) = quantile(col, 1.0 - tail);
  }
  return s;
}

}  // namespace rpbart
