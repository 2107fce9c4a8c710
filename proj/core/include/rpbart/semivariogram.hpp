#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rpbart/sampler.hpp"

namespace rpbart {

/// Binned (distance, semivariance) pairs.
///
/// Theoretical curves carry Monte-Carlo standard errors; empirical curves
/// carry pair counts in `uncertainty`.
struct SemivariogramCurve {
  enum class Uncertainty { StandardError, PairCount };
  std::vector<double> distance;
  std::vector<double> value;
  std::vector<double> uncertainty;
  Uncertainty kind = Uncertainty::StandardError;
  /// Plateau sigma^2 + m tau^2 (theoretical curves only).
  double sill = 0.0;
  /// Centres of bins that held no pairs (empirical curves only).
  std::vector<double> empty_bins;
};

struct McEstimate {
  double value = 0.0;
  double se = 0.0;
};

/// Monte-Carlo settings. Draw d uses its own stream, so results depend on
/// the seed but not on the worker count.
struct McSettings {
  int n_draws = 1000;
  std::uint64_t seed = 1;
  int threads = 1;
};

/// One prior draw of (T, gamma) from the hyperparameters on grid `grid`.
TreeDraw draw_prior_tree(const Hyperparameters& hyper, const CutpointGrid& grid, Rng& rng);

/// E over prior (T, gamma) of sum_b phi_b(x + h) phi_b(x), the probability
/// that x and x + h share a terminal node.
McEstimate phibar_mc(const Hyperparameters& hyper, std::span<const double> x,
                     std::span<const double> h, const McSettings& mc);

/// sigma^2 + m tau^2 (1 - phibar), with m tau^2 given as `scale`.
McEstimate nu_xh(const Hyperparameters& hyper, double scale, double sigma2,
                 std::span<const double> x, std::span<const double> h, const McSettings& mc);

/// m tau^2 for regression on response range [y_min, y_max]; equals ((y_max - y_min) / (2k))^2.
double regression_scale(const Hyperparameters& hyper, std::pair<double, double> y_range);

struct DomainAverage {
  /// Low-discrepancy base points and random directions per base point.
  int n_points = 256;
  int n_directions = 64;
  /// Side length of the (hyper-cubic) input domain; distances are in these units.
  double side = 1.0;
};

/// Domain-averaged semivariogram over the unit hypercube of dimension p.
/// Every distance shares the same prior draws, so curves for different
/// sigma^2 under one seed differ by exactly the sigma^2 shift.
SemivariogramCurve nu_bar(const Hyperparameters& hyper, double scale, double sigma2, std::size_t p,
                          const std::vector<double>& distances, const DomainAverage& avg,
                          const McSettings& mc);

/// Prior covariance of Y(x) and Y(x') given fixed trees and bandwidths:
/// tau^2 sum_j sum_b phi_bj(x) phi_bj(x') for x != x', m tau^2 + sigma^2 at x = x'.
double cov_y(const std::vector<TreeDraw>& trees, const CutpointGrid& grid, double q, double tau,
             double sigma2, std::span<const double> x, std::span<const double> xp);

/// Covariance function of a stochastic emulator.
class Kernel {
 public:
  virtual ~Kernel() = default;
  virtual double operator()(std::span<const double> x, std::span<const double> xp) const = 0;
  virtual std::string name() const = 0;
};

/// R(x, x') = c.
class ConstantKernel final : public Kernel {
 public:
  explicit ConstantKernel(double value);
  double operator()(std::span<const double>, std::span<const double>) const override { return value_; }
  std::string name() const override { return "constant"; }

 private:
  double value_;
};

/// R(x, x') = s^2 when x == x', else 0.
class WhiteNoiseKernel final : public Kernel {
 public:
  explicit WhiteNoiseKernel(double variance);
  double operator()(std::span<const double> x, std::span<const double> xp) const override;
  std::string name() const override { return "white_noise"; }

 private:
  double variance_;
};

/// R(x, x') = s^2 exp(-|x - x'|^2 / (2 l^2)).
class SquaredExponentialKernel final : public Kernel {
 public:
  SquaredExponentialKernel(double variance, double length_scale);
  double operator()(std::span<const double> x, std::span<const double> xp) const override;
  std::string name() const override { return "squared_exponential"; }

 private:
  double variance_;
  double length_;
};

using KernelFactory = std::function<std::shared_ptr<const Kernel>(const std::vector<double>&)>;

/// Name -> factory lookup. The three built-in families are pre-registered.
class KernelRegistry {
 public:
  static KernelRegistry& instance();
  void add(const std::string& name, KernelFactory factory);
  std::shared_ptr<const Kernel> make(const std::string& name, const std::vector<double>& params) const;
  std::vector<std::string> names() const;

 private:
  KernelRegistry();
  std::map<std::string, KernelFactory> factories_;
};

/// Per-model emulator: constant mean plus a covariance kernel.
struct EmulatorSpec {
  double mean = 0.0;
  std::shared_ptr<const Kernel> kernel;
};
using EmulatorKernelSpec = std::vector<EmulatorSpec>;

/// Mixing-model semivariogram at (x, h):
/// sigma^2 + (1/(4k^2) + 1/K^2) sum_l [R_l(x,x) - R_l(x+h,x)]
///         + (1/(4k^2)) (1 - phibar) sum_l [R_l(x+h,x) + mean_l^2].
McEstimate mixing_nu_xh(const Hyperparameters& hyper, double sigma2, const EmulatorKernelSpec& kernels,
                        std::span<const double> x, std::span<const double> h, const McSettings& mc);

/// Domain average of mixing_nu_xh over the same pair scheme as nu_bar.
SemivariogramCurve mixing_nu_bar(const Hyperparameters& hyper, double sigma2,
                                 const EmulatorKernelSpec& kernels, std::size_t p,
                                 const std::vector<double>& distances, const DomainAverage& avg,
                                 const McSettings& mc);

/// n_bins equal-width bins on [0, max_distance].
std::vector<double> equal_width_bins(double max_distance, std::size_t n_bins);

/// Classical (Matheron) estimator: per bin, sum (y_i - y_j)^2 / (2 |N|).
/// A pair with distance d falls in [e_k, e_{k+1}) (the last bin is closed);
/// pairs outside the edges are ignored. Reported distance is the mean pair
/// distance in the bin.
SemivariogramCurve empirical_semivariogram(const RowMatrix& X, const Eigen::VectorXd& y,
                                           const std::vector<double>& edges);

}  // namespace rpbart
