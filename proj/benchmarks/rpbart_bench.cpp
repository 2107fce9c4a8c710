// Throughput of the hot kernels: path probabilities, one MCMC sweep,
// projections and bilinear regridding.

#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "rpbart/mixing.hpp"
#include "rpbart/projection.hpp"
#include "rpbart/random_path.hpp"
#include "rpbart/sampler.hpp"

namespace {

using namespace rpbart;

// Complete binary tree of the given depth, splitting alternately on each input.
Tree balanced_tree(int depth, std::size_t dims, std::size_t n_cut) {
  std::vector<NodeRecord> nodes;
  auto grow = [&](auto&& self, int d, int lo, int hi) -> void {
    if (d == depth || hi - lo < 2) {
      nodes.push_back(NodeRecord{});
      return;
    }
    const int cut = (lo + hi) / 2;
    nodes.push_back(NodeRecord{false, SplitRule{static_cast<int>(d % dims), cut}});
    self(self, d + 1, lo, cut);
    self(self, d + 1, cut, hi);
  };
  grow(grow, 0, -1, static_cast<int>(n_cut));
  return Tree::from_preorder(nodes);
}

void BM_PathProbs(benchmark::State& state) {
  const auto grid = CutpointGrid::uniform(2, 100);
  const Tree tree = balanced_tree(static_cast<int>(state.range(0)), 1, 100);
  std::vector<double> out(tree.num_leaves());
  const std::vector<double> x{0.37, 0.61};
  for (auto _ : state) {
    path_probs(tree, grid, 0.3, 1.0, x, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.counters["leaves"] = static_cast<double>(tree.num_leaves());
}
BENCHMARK(BM_PathProbs)->DenseRange(1, 6, 1);

void BM_Sweep(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  const auto K = static_cast<Eigen::Index>(state.range(1));
  Rng rng(1);
  ModelData data;
  data.X.resize(n, 2);
  data.F.resize(n, K);
  data.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    data.X(i, 0) = rng.uniform();
    data.X(i, 1) = rng.uniform();
    for (Eigen::Index l = 0; l < K; ++l) data.F(i, l) = K == 1 ? 1.0 : rng.normal();
    data.y(i) = std::sin(6 * data.X(i, 0)) + 0.1 * rng.normal();
  }
  SamplerConfig cfg;
  cfg.m = 20;
  cfg.grid = CutpointGrid::uniform(2, 100);
  cfg.leaf = LeafPrior{0.1, Eigen::VectorXd::Zero(K)};
  cfg.lambda = 0.01;
  Sampler sampler(data, cfg, 2);
  sampler.initialize();
  for (int i = 0; i < 50; ++i) sampler.sweep(true);
  for (auto _ : state) sampler.sweep();
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_Sweep)->Args({100, 1})->Args({400, 1})->Args({200, 2})->Args({200, 4})->Unit(benchmark::kMillisecond);

void BM_Sparsegen(benchmark::State& state) {
  Rng rng(3);
  std::vector<double> w(static_cast<std::size_t>(state.range(0)));
  for (double& v : w) v = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(sparsegen_project(w, 0.2));
}
BENCHMARK(BM_Sparsegen)->RangeMultiplier(4)->Range(2, 128);

void BM_Softmax(benchmark::State& state) {
  Rng rng(4);
  std::vector<double> w(static_cast<std::size_t>(state.range(0)));
  for (double& v : w) v = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(softmax_project(w, 0.5));
}
BENCHMARK(BM_Softmax)->RangeMultiplier(4)->Range(2, 128);

void BM_Regrid(benchmark::State& state) {
  ModelOutputGrid g;
  g.id = "bench";
  const int nx = 144, ny = 73;
  for (int i = 0; i < nx; ++i) g.axes[0].push_back(2.5 * i);
  for (int j = 0; j < ny; ++j) g.axes[1].push_back(-90.0 + 2.5 * j);
  g.values.resize(nx, ny);
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) g.values(i, j) = std::cos(0.05 * i) * std::sin(0.1 * j);
  g.periodic = {true, false};
  Rng rng(5);
  RowMatrix pts(state.range(0), 2);
  for (Eigen::Index r = 0; r < pts.rows(); ++r) {
    pts(r, 0) = 360.0 * rng.uniform();
    pts(r, 1) = -90.0 + 180.0 * rng.uniform();
  }
  for (auto _ : state) benchmark::DoNotOptimize(bilinear_regrid(g, pts));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Regrid)->Arg(1000)->Arg(100000);

}  // namespace
BENCHMARK_MAIN();
