#include "rpbart/semivariogram.hpp"

#include <algorithm>
#include <boost/random/sobol.hpp>
#include <cmath>
#include <numeric>

#include "parallel.hpp"
#include "rpbart/errors.hpp"

namespace rpbart {

namespace {

McEstimate mean_and_se(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double se = v.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  return {mean, se};
}

void check_mc(const McSettings& mc) {
  if (mc.n_draws < 1) throw ContractError("need at least one Monte-Carlo draw");
}

void check_in_domain(std::span<const double> x, std::span<const double> h) {
  if (x.size() != h.size()) throw ContractError("x and h must have the same dimension");
  for (std::size_t v = 0; v < x.size(); ++v) {
    const double y = x[v] + h[v];
    if (!(x[v] >= 0.0 && x[v] <= 1.0 && y >= 0.0 && y <= 1.0))
      throw ContractError("x and x + h must lie in the unit hypercube");
  }
}

double same_leaf_prob(const TreeDraw& t, const CutpointGrid& grid, double q,
                      std::span<const double> a, std::span<const double> b,
                      std::vector<double>& pa, std::vector<double>& pb) {
  pa.resize(t.tree.num_leaves());
  pb.resize(t.tree.num_leaves());
  path_probs(t.tree, grid, t.gamma, q, a, pa);
  path_probs(t.tree, grid, t.gamma, q, b, pb);
  return std::inner_product(pa.begin(), pa.end(), pb.begin(), 0.0);
}

std::vector<double> shifted(std::span<const double> x, std::span<const double> h) {
  std::vector<double> y(x.begin(), x.end());
  for (std::size_t v = 0; v < y.size(); ++v) y[v] += h[v];
  return y;
}

}  // namespace

TreeDraw draw_prior_tree(const Hyperparameters& hyper, const CutpointGrid& grid, Rng& rng) {
  TreeDraw t;
  t.tree = draw_tree_prior(hyper.tree, grid, rng);
  t.gamma = rng.beta(hyper.bandwidth.a1, hyper.bandwidth.a2);
  return t;
}

McEstimate phibar_mc(const Hyperparameters& hyper, std::span<const double> x,
                     std::span<const double> h, const McSettings& mc) {
  hyper.validate();
  check_mc(mc);
  check_in_domain(x, h);
  const auto grid = CutpointGrid::uniform(x.size(), hyper.n_cut);
  const auto xh = shifted(x, h);
  std::vector<double> per_draw(static_cast<std::size_t>(mc.n_draws));
  detail::parallel_for(per_draw.size(), mc.threads, [&](std::size_t d) {
    Rng rng(mix_seed(mc.seed, d));
    const TreeDraw t = draw_prior_tree(hyper, grid, rng);
    std::vector<double> pa, pb;
    per_draw[d] = same_leaf_prob(t, grid, hyper.bandwidth.q, x, xh, pa, pb);
  });
  return mean_and_se(per_draw);
}

double regression_scale(const Hyperparameters& hyper, std::pair<double, double> y_range) {
  const LeafPrior prior = tau_and_prior_mean(hyper, y_range);
  return hyper.m * prior.tau * prior.tau;
}

McEstimate nu_xh(const Hyperparameters& hyper, double scale, double sigma2,
                 std::span<const double> x, std::span<const double> h, const McSettings& mc) {
  if (!(scale >= 0.0) || !(sigma2 >= 0.0)) throw ContractError("scale and sigma2 must be >= 0");
  const McEstimate phi = phibar_mc(hyper, x, h, mc);
  return {sigma2 + scale * (1.0 - phi.value), scale * phi.se};
}

namespace {

struct PairSet {
  struct Pair {
    std::size_t base;
    std::vector<double> end;
  };
  std::vector<std::vector<double>> base;
  /// pairs[k]: admissible (x, x + h) pairs at distance k.
  std::vector<std::vector<Pair>> pairs;
};

void check_averaging(std::size_t p, const std::vector<double>& distances, const DomainAverage& avg) {
  if (p < 1) throw ContractError("input dimension must be >= 1");
  if (avg.n_points < 1 || avg.n_directions < 1 || !(avg.side > 0.0))
    throw ContractError("domain averaging needs points, directions and a positive side length");
  for (std::size_t i = 0; i < distances.size(); ++i) {
    if (!(distances[i] >= 0.0)) throw ContractError("distances must be >= 0");
    if (i > 0 && !(distances[i] > distances[i - 1]))
      throw ContractError("distances must be strictly increasing");
  }
}

PairSet build_pairs(std::size_t p, const std::vector<double>& distances, const DomainAverage& avg,
                    std::uint64_t seed) {
  // Base points: a Sobol sequence under a random shift modulo 1.
  Rng geometry(mix_seed(seed, ~std::uint64_t{0}));
  std::vector<double> shift(p);
  for (double& s : shift) s = geometry.uniform();
  boost::random::sobol sobol(p);
  PairSet set;
  set.base.assign(static_cast<std::size_t>(avg.n_points), std::vector<double>(p));
  for (auto& pt : set.base)
    for (std::size_t v = 0; v < p; ++v) {
      const double u = std::ldexp(static_cast<double>(sobol()), -64);
      pt[v] = std::fmod(u + shift[v], 1.0);
    }
  std::vector<std::vector<double>> dirs(static_cast<std::size_t>(avg.n_points * avg.n_directions),
                                        std::vector<double>(p));
  for (auto& u : dirs) {
    double norm = 0.0;
    while (!(norm > 0.0)) {
      norm = 0.0;
      for (double& c : u) {
        c = geometry.normal();
        norm += c * c;
      }
    }
    for (double& c : u) c /= std::sqrt(norm);
  }

  set.pairs.resize(distances.size());
  for (std::size_t k = 0; k < distances.size(); ++k) {
    const double r = distances[k] / avg.side;
    for (std::size_t i = 0; i < set.base.size(); ++i)
      for (int dn = 0; dn < avg.n_directions; ++dn) {
        const auto& u = dirs[i * static_cast<std::size_t>(avg.n_directions) + static_cast<std::size_t>(dn)];
        std::vector<double> end(p);
        bool inside = true;
        for (std::size_t v = 0; v < p && inside; ++v) {
          end[v] = set.base[i][v] + r * u[v];
          inside = end[v] >= 0.0 && end[v] <= 1.0;
        }
        if (inside) set.pairs[k].push_back({i, std::move(end)});
        if (r == 0.0) break;  // every direction gives the same pair
      }
    if (set.pairs[k].empty())
      throw ContractError("no point pair inside the domain at distance " + std::to_string(distances[k]));
  }
  return set;
}

/// Per distance: mean over draws and pairs of offset + slope (1 - same-leaf
/// probability), where offset and slope may vary by pair.
SemivariogramCurve average_over_pairs(const Hyperparameters& hyper, std::size_t p,
                                      const std::vector<double>& distances, const PairSet& set,
                                      const std::vector<std::vector<double>>& offset,
                                      const std::vector<std::vector<double>>& slope,
                                      const McSettings& mc) {
  const auto grid = CutpointGrid::uniform(p, hyper.n_cut);
  const double q = hyper.bandwidth.q;
  const auto n_draws = static_cast<std::size_t>(mc.n_draws);
  std::vector<std::vector<double>> per_draw(distances.size(), std::vector<double>(n_draws));
  detail::parallel_for(n_draws, mc.threads, [&](std::size_t d) {
    Rng rng(mix_seed(mc.seed, d));
    const TreeDraw t = draw_prior_tree(hyper, grid, rng);
    std::vector<std::vector<double>> base_phi(set.base.size(), std::vector<double>(t.tree.num_leaves()));
    for (std::size_t i = 0; i < set.base.size(); ++i)
      path_probs(t.tree, grid, t.gamma, q, set.base[i], base_phi[i]);
    std::vector<double> phi(t.tree.num_leaves());
    for (std::size_t k = 0; k < distances.size(); ++k) {
      double acc = 0.0;
      const auto& pairs = set.pairs[k];
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        path_probs(t.tree, grid, t.gamma, q, pairs[i].end, phi);
        const double same = std::inner_product(phi.begin(), phi.end(), base_phi[pairs[i].base].begin(), 0.0);
        acc += offset[k][i] + slope[k][i] * (1.0 - same);
      }
      per_draw[k][d] = acc / static_cast<double>(pairs.size());
    }
  });
  SemivariogramCurve curve;
  curve.kind = SemivariogramCurve::Uncertainty::StandardError;
  for (std::size_t k = 0; k < distances.size(); ++k) {
    const McEstimate est = mean_and_se(per_draw[k]);
    curve.distance.push_back(distances[k]);
    curve.value.push_back(est.value);
    curve.uncertainty.push_back(est.se);
  }
  return curve;
}

}  // namespace

SemivariogramCurve nu_bar(const Hyperparameters& hyper, double scale, double sigma2, std::size_t p,
                          const std::vector<double>& distances, const DomainAverage& avg,
                          const McSettings& mc) {
  hyper.validate();
  check_mc(mc);
  check_averaging(p, distances, avg);
  if (!(scale >= 0.0) || !(sigma2 >= 0.0)) throw ContractError("scale and sigma2 must be >= 0");
  const PairSet set = build_pairs(p, distances, avg, mc.seed);
  std::vector<std::vector<double>> offset, slope;
  for (const auto& pairs : set.pairs) {
    offset.emplace_back(pairs.size(), sigma2);
    slope.emplace_back(pairs.size(), scale);
  }
  SemivariogramCurve curve = average_over_pairs(hyper, p, distances, set, offset, slope, mc);
  curve.sill = sigma2 + scale;
  return curve;
}

SemivariogramCurve mixing_nu_bar(const Hyperparameters& hyper, double sigma2,
                                 const EmulatorKernelSpec& kernels, std::size_t p,
                                 const std::vector<double>& distances, const DomainAverage& avg,
                                 const McSettings& mc) {
  hyper.validate();
  check_mc(mc);
  check_averaging(p, distances, avg);
  if (kernels.empty()) throw ContractError("mixing semivariogram needs one emulator per model");
  if (!(sigma2 >= 0.0)) throw ContractError("sigma2 must be >= 0");
  const PairSet set = build_pairs(p, distances, avg, mc.seed);
  const double K = static_cast<double>(kernels.size());
  const double c = 1.0 / (4.0 * hyper.k * hyper.k);
  std::vector<std::vector<double>> offset(set.pairs.size()), slope(set.pairs.size());
  double sill = sigma2;
  for (const auto& e : kernels) {
    if (!e.kernel) throw ContractError("emulator without a kernel");
  }
  for (std::size_t k = 0; k < set.pairs.size(); ++k)
    for (const auto& pr : set.pairs[k]) {
      const auto& x = set.base[pr.base];
      double increment = 0.0, level = 0.0;
      for (const auto& e : kernels) {
        const double r0 = (*e.kernel)(x, x);
        const double rh = (*e.kernel)(pr.end, x);
        increment += r0 - rh;
        level += rh + e.mean * e.mean;
      }
      offset[k].push_back(sigma2 + (c + 1.0 / (K * K)) * increment);
      slope[k].push_back(c * level);
    }
  SemivariogramCurve curve = average_over_pairs(hyper, p, distances, set, offset, slope, mc);
  // Plateau when the emulators decorrelate and no two points share a leaf.
  const std::vector<double> origin(p, 0.0);
  for (const auto& e : kernels)
    sill += (c + 1.0 / (K * K)) * (*e.kernel)(origin, origin) + c * e.mean * e.mean;
  curve.sill = sill;
  return curve;
}

double cov_y(const std::vector<TreeDraw>& trees, const CutpointGrid& grid, double q, double tau,
             double sigma2, std::span<const double> x, std::span<const double> xp) {
  if (x.size() != xp.size()) throw ContractError("x and x' must have the same dimension");
  const double tau2 = tau * tau;
  if (std::equal(x.begin(), x.end(), xp.begin()))
    return static_cast<double>(trees.size()) * tau2 + sigma2;
  double acc = 0.0;
  std::vector<double> pa, pb;
  for (const auto& t : trees) acc += same_leaf_prob(t, grid, q, x, xp, pa, pb);
  return tau2 * acc;
}

ConstantKernel::ConstantKernel(double value) : value_(value) {
  if (!std::isfinite(value) || value < 0.0) throw ContractError("constant kernel value must be >= 0");
}

WhiteNoiseKernel::WhiteNoiseKernel(double variance) : variance_(variance) {
  if (!(variance > 0.0)) throw ContractError("white-noise variance must be > 0");
}

double WhiteNoiseKernel::operator()(std::span<const double> x, std::span<const double> xp) const {
  return std::equal(x.begin(), x.end(), xp.begin(), xp.end()) ? variance_ : 0.0;
}

SquaredExponentialKernel::SquaredExponentialKernel(double variance, double length_scale)
    : variance_(variance), length_(length_scale) {
  if (!(variance > 0.0) || !(length_scale > 0.0))
    throw ContractError("squared-exponential kernel needs variance > 0 and length scale > 0");
}

double SquaredExponentialKernel::operator()(std::span<const double> x, std::span<const double> xp) const {
  if (x.size() != xp.size()) throw ContractError("kernel arguments differ in dimension");
  double d2 = 0.0;
  for (std::size_t v = 0; v < x.size(); ++v) d2 += (x[v] - xp[v]) * (x[v] - xp[v]);
  return variance_ * std::exp(-0.5 * d2 / (length_ * length_));
}

KernelRegistry::KernelRegistry() {
  auto arity = [](const std::string& name, const std::vector<double>& p, std::size_t n) {
    if (p.size() != n)
      throw ContractError("kernel '" + name + "' takes " + std::to_string(n) + " parameter(s)");
  };
  factories_["constant"] = [arity](const std::vector<double>& p) {
    arity("constant", p, 1);
    return std::make_shared<const ConstantKernel>(p[0]);
  };
  factories_["white_noise"] = [arity](const std::vector<double>& p) {
    arity("white_noise", p, 1);
    return std::make_shared<const WhiteNoiseKernel>(p[0]);
  };
  factories_["squared_exponential"] = [arity](const std::vector<double>& p) {
    arity("squared_exponential", p, 2);
    return std::make_shared<const SquaredExponentialKernel>(p[0], p[1]);
  };
}

KernelRegistry& KernelRegistry::instance() {
  static KernelRegistry registry;
  return registry;
}

void KernelRegistry::add(const std::string& name, KernelFactory factory) {
  factories_[name] = std::move(factory);
}

std::shared_ptr<const Kernel> KernelRegistry::make(const std::string& name,
                                                   const std::vector<double>& params) const {
  const auto it = factories_.find(name);
  if (it == factories_.end()) throw ContractError("unknown kernel '" + name + "'");
  return it->second(params);
}

std::vector<std::string> KernelRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : factories_) out.push_back(name);
  return out;
}

McEstimate mixing_nu_xh(const Hyperparameters& hyper, double sigma2, const EmulatorKernelSpec& kernels,
                        std::span<const double> x, std::span<const double> h, const McSettings& mc) {
  if (kernels.empty()) throw ContractError("mixing semivariogram needs one emulator per model");
  if (!(sigma2 >= 0.0)) throw ContractError("sigma2 must be >= 0");
  const auto xh = shifted(x, h);
  const double K = static_cast<double>(kernels.size());
  const double c = 1.0 / (4.0 * hyper.k * hyper.k);
  double increment = 0.0;  // sum_l R_l(x,x) - R_l(x+h,x)
  double level = 0.0;      // sum_l R_l(x+h,x) + mean_l^2
  for (const auto& e : kernels) {
    if (!e.kernel) throw ContractError("emulator without a kernel");
    const double r0 = (*e.kernel)(x, x);
    const double rh = (*e.kernel)(xh, x);
    increment += r0 - rh;
    level += rh + e.mean * e.mean;
  }
  const McEstimate phi = phibar_mc(hyper, x, h, mc);
  return {sigma2 + (c + 1.0 / (K * K)) * increment + c * (1.0 - phi.value) * level,
          c * std::abs(level) * phi.se};
}

std::vector<double> equal_width_bins(double max_distance, std::size_t n_bins) {
  if (!(max_distance > 0.0) || n_bins < 1) throw ContractError("bins need a positive range and count");
  std::vector<double> edges(n_bins + 1);
  for (std::size_t k = 0; k <= n_bins; ++k)
    edges[k] = max_distance * static_cast<double>(k) / static_cast<double>(n_bins);
  return edges;
}

SemivariogramCurve empirical_semivariogram(const RowMatrix& X, const Eigen::VectorXd& y,
                                           const std::vector<double>& edges) {
  if (X.rows() != y.size()) throw ContractError("X and y differ in length");
  if (X.rows() < 2) throw ContractError("need at least two points");
  if (edges.size() < 2) throw ContractError("need at least one bin");
  for (std::size_t k = 1; k < edges.size(); ++k)
    if (!(edges[k] > edges[k - 1])) throw ContractError("bin edges must be strictly increasing");

  const std::size_t bins = edges.size() - 1;
  std::vector<double> sum(bins, 0.0), dist(bins, 0.0);
  std::vector<std::size_t> count(bins, 0);
  bool distinct = false;
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index j = i + 1; j < X.rows(); ++j) {
      const double d = (X.row(i) - X.row(j)).norm();
      if (d > 0.0) distinct = true;
      if (d < edges.front() || d > edges.back()) continue;
      auto k = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), d) - edges.begin());
      k = std::min(k, bins) - 1;
      const double diff = y(i) - y(j);
      sum[k] += diff * diff;
      dist[k] += d;
      ++count[k];
    }
  if (!distinct) throw ContractError("all points coincide");

  SemivariogramCurve curve;
  curve.kind = SemivariogramCurve::Uncertainty::PairCount;
  for (std::size_t k = 0; k < bins; ++k) {
    if (count[k] == 0) {
      curve.empty_bins.push_back(0.5 * (edges[k] + edges[k + 1]));
      continue;
    }
    const double n = static_cast<double>(count[k]);
    curve.distance.push_back(dist[k] / n);
    curve.value.push_back(sum[k] / (2.0 * n));
    curve.uncertainty.push_back(n);
  }
  return curve;
}

}  // namespace rpbart
