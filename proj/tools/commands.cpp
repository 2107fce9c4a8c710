#include "commands.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "rpbart/errors.hpp"
#include "rpbart/io.hpp"
#include "rpbart/mixing.hpp"
#include "rpbart/model.hpp"
#include "rpbart/projection.hpp"
#include "rpbart/semivariogram.hpp"

namespace rpbart::cli {

namespace fs = std::filesystem;

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> threads;
};

/// Effective settings shared by every command.
/// Keys that cannot change any result; left out of the config hash.
const std::set<std::string> kOperationalKeys{"out", "threads"};

struct Context {
  std::string command;
  Config cfg;
  std::uint64_t seed = 1;
  fs::path out;
  int threads = 1;
  std::ostream* log = nullptr;

  TableMeta meta(std::vector<std::pair<std::string, std::string>> extra = {}) const {
    return TableMeta{command, cfg.hash(kOperationalKeys), std::move(extra)};
  }
  std::string path(const std::string& name) const { return (out / name).string(); }
};

const std::set<std::string> kCommonKeys{"seed", "out", "threads"};

std::set<std::string> with(std::set<std::string> keys, const std::set<std::string>& more) {
  keys.insert(more.begin(), more.end());
  keys.insert(kCommonKeys.begin(), kCommonKeys.end());
  return keys;
}

const std::set<std::string> kGridKeys{"model_grids", "model_names", "grid_coords", "grid_periodic0",
                                      "grid_periodic1", "grid_period0", "grid_period1"};

Context make_context(const std::string& command, const Flags& flags) {
  Context ctx;
  ctx.command = command;
  ctx.cfg = Config::load(flags.config);
  if (flags.seed) ctx.cfg.set("seed", std::to_string(*flags.seed));
  if (flags.out) ctx.cfg.set("out", *flags.out);
  if (flags.threads) ctx.cfg.set("threads", std::to_string(*flags.threads));
  const long long seed = ctx.cfg.get_int("seed", 1);
  if (seed < 0) throw ValidationError("config key 'seed': expected a non-negative integer");
  ctx.seed = static_cast<std::uint64_t>(seed);
  const long long threads = ctx.cfg.get_int("threads", 1);
  if (threads < 1) throw ValidationError("config key 'threads': expected an integer >= 1");
  ctx.threads = static_cast<int>(threads);
  ctx.out = ctx.cfg.get_string("out", ".");
  std::error_code ec;
  fs::create_directories(ctx.out, ec);
  if (ec) throw Error("cannot create output directory '" + ctx.out.string() + "': " + ec.message());
  return ctx;
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

/// Model grids named in the config, in config order.
std::vector<ModelOutputGrid> load_grids(const Config& cfg) {
  const auto paths = cfg.get_list("model_grids");
  auto names = cfg.get_list("model_names");
  if (!names.empty() && names.size() != paths.size())
    throw ValidationError("config key 'model_names': expected one name per entry of 'model_grids'");
  std::vector<ModelOutputGrid> grids;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const std::string id = names.empty() ? fs::path(paths[i]).stem().string() : names[i];
    auto g = read_model_grid(paths[i], id);
    for (std::size_t a = 0; a < 2; ++a) {
      g.periodic[a] = cfg.get_bool("grid_periodic" + std::to_string(a), false);
      g.period[a] = cfg.get_double("grid_period" + std::to_string(a), 360.0);
    }
    g.validate();
    grids.push_back(std::move(g));
  }
  return grids;
}

/// n x K model outputs for a table: regridded when the config names grids,
/// else read from the columns named `ids`.
RowMatrix model_outputs(const Config& cfg, const Table& table, const std::vector<std::string>& ids) {
  if (!cfg.has("model_grids")) return table.select(ids);
  const auto grids = load_grids(cfg);
  const auto coords = cfg.get_list("grid_coords");
  if (coords.size() != 2) throw ValidationError("config key 'grid_coords': expected two column names");
  const RowMatrix pts = table.select(coords);
  RowMatrix F(pts.rows(), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t l = 0; l < ids.size(); ++l) {
    const auto it = std::find_if(grids.begin(), grids.end(), [&](const auto& g) { return g.id == ids[l]; });
    if (it == grids.end()) throw IngestionError("no model grid for model '" + ids[l] + "'");
    F.col(static_cast<Eigen::Index>(l)) = bilinear_regrid(*it, pts);
  }
  return F;
}

std::vector<std::string> model_ids(const Config& cfg) {
  if (cfg.has("model_grids")) {
    std::vector<std::string> ids;
    for (const auto& g : load_grids(cfg)) ids.push_back(g.id);
    return ids;
  }
  auto ids = cfg.get_list("models");
  if (ids.empty()) throw ValidationError("mixing needs 'models' (data columns) or 'model_grids'");
  return ids;
}

void append_summary(std::vector<std::vector<double>>& rows, const PointSummary& s) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto e = static_cast<Eigen::Index>(i);
    rows[i].insert(rows[i].end(), {s.mean(e), s.lower(e), s.upper(e)});
  }
}

void append_summary_header(std::vector<std::string>& header, const std::string& name) {
  header.insert(header.end(), {name + "_mean", name + "_lower95", name + "_upper95"});
}

std::vector<std::vector<double>> coordinate_rows(const RowMatrix& X) {
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) rows[static_cast<std::size_t>(i)].assign(X.row(i).data(), X.row(i).data() + X.cols());
  return rows;
}

PointSummary summarize_or_empty(const Eigen::MatrixXd& per_draw) {
  if (per_draw.rows() == 0)
    throw ValidationError("the archive holds no posterior draws");
  return summarize(per_draw);
}

// ---------------------------------------------------------------- fit

int cmd_fit(Context& ctx) {
  const Config& cfg = ctx.cfg;
  cfg.reject_unknown(with(hyperparameter_keys(), with(kGridKeys, {"mode", "data", "covariates", "response",
                                                                  "models", "archive"})));
  cfg.require({"data", "covariates", "response"});
  const std::string mode = cfg.get_string("mode", "regression");
  if (mode != "regression" && mode != "mixing")
    throw ValidationError("config key 'mode': expected 'regression' or 'mixing', got '" + mode + "'");
  Hyperparameters hyper = hyperparameters_from(cfg);

  const Table table = read_csv_file(cfg.get_string("data"));
  const auto covariates = cfg.get_list("covariates");
  const RowMatrix X = table.select(covariates);
  const Eigen::VectorXd y = table.select({cfg.get_string("response")}).col(0);
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (!std::isfinite(y(i))) throw IngestionError("response is missing or non-finite at data row " + std::to_string(i + 1));
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    if (!X.row(i).allFinite()) throw IngestionError("covariate is missing or non-finite at data row " + std::to_string(i + 1));
  if (X.rows() == 0) throw IngestionError("the data table has no rows");

  FitResult fit;
  if (mode == "regression") {
    fit = fit_regression(X, y, hyper, ctx.seed);
  } else {
    const auto ids = model_ids(cfg);
    hyper.K = static_cast<int>(ids.size());
    fit = fit_mix(X, y, model_outputs(cfg, table, ids), ids, hyper, ctx.seed);
  }
  fit.posterior.covariates = covariates;
  const std::string archive = ctx.path(cfg.get_string("archive", "posterior.rpa"));
  save_posterior_file(archive, fit.posterior);

  const auto& st = fit.report.stats;
  const auto& trace = fit.report.sigma2_trace;
  std::vector<double> kept(trace.begin() + std::min<std::ptrdiff_t>(hyper.schedule.burn, static_cast<std::ptrdiff_t>(trace.size())), trace.end());
  std::ofstream rep(ctx.path("fit_report.txt"));
  rep << "# format-version: " << kFormatVersion << "\n# command: fit\n# config-hash: " << cfg.hash(kOperationalKeys) << '\n';
  rep << "mode: " << mode << "\nobservations: " << X.rows() << "\ncovariates: " << X.cols()
      << "\ntrees: " << hyper.m << "\nretained_draws: " << fit.posterior.draws.size()
      << "\ntau: " << fmt(fit.tau) << "\nlambda: " << fmt(fit.lambda)
      << "\nbirth_acceptance: " << fmt(st.birth.rate()) << " (" << st.birth.accepted << "/" << st.birth.proposed << ")"
      << "\ndeath_acceptance: " << fmt(st.death.rate()) << " (" << st.death.accepted << "/" << st.death.proposed << ")"
      << "\nbandwidth_acceptance: " << fmt(st.bandwidth.rate()) << " (" << st.bandwidth.accepted << "/"
      << st.bandwidth.proposed << ")";
  if (!kept.empty()) {
    double mean = 0.0;
    for (double v : kept) mean += v;
    mean /= static_cast<double>(kept.size());
    rep << "\nsigma2_mean: " << fmt(mean) << "\nsigma2_q025: " << fmt(quantile(kept, 0.025))
        << "\nsigma2_q975: " << fmt(quantile(kept, 0.975));
  }
  rep << "\nruntime_seconds: " << fmt(fit.report.seconds) << '\n';

  std::vector<std::vector<double>> rows;
  for (std::size_t s = 0; s < trace.size(); ++s) rows.push_back({static_cast<double>(s), trace[s]});
  write_csv_file(ctx.path("sigma2_trace.csv"), ctx.meta(), {"sweep", "sigma2"}, rows);
  *ctx.log << "wrote " << archive << " (" << fit.posterior.draws.size() << " draws)\n";
  return kOk;
}

// ---------------------------------------------------------------- predict

int cmd_predict(Context& ctx) {
  const Config& cfg = ctx.cfg;
  cfg.reject_unknown(with(kGridKeys, {"archive", "data", "output"}));
  cfg.require({"archive", "data"});
  const Posterior post = load_posterior_file(cfg.get_string("archive"));
  const Table table = read_csv_file(cfg.get_string("data"));
  const RowMatrix X = table.select(post.covariates);
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    if (!X.row(i).allFinite()) throw IngestionError("covariate is missing or non-finite at query row " + std::to_string(i + 1));

  std::vector<std::string> header = post.covariates;
  auto rows = coordinate_rows(X);
  append_summary_header(header, "prediction");
  if (X.rows() > 0) {
    if (post.mode == FitMode::Regression) {
      append_summary(rows, summarize_or_empty(predict_draws(post, X, ctx.threads)));
    } else {
      const RowMatrix F = model_outputs(cfg, table, post.models);
      const WeightDraws w = weights_at(post, X, ctx.threads);
      append_summary(rows, summarize_or_empty(mixed_prediction(w, F)));
      for (std::size_t l = 0; l < post.models.size(); ++l) {
        Eigen::MatrixXd wl(static_cast<Eigen::Index>(w.size()), X.rows());
        for (std::size_t d = 0; d < w.size(); ++d) wl.row(static_cast<Eigen::Index>(d)) = w[d].col(static_cast<Eigen::Index>(l)).transpose();
        append_summary(rows, summarize(wl));
      }
      append_summary(rows, summarize(sum_of_weights(w)));
    }
  }
  if (post.mode == FitMode::Mixing) {
    for (const auto& m : post.models) append_summary_header(header, "w_" + m);
    append_summary_header(header, "w_sum");
  }
  const std::string path = ctx.path(cfg.get_string("output", "predictions.csv"));
  write_csv_file(path, ctx.meta(), header, rows);
  *ctx.log << "wrote " << path << " (" << rows.size() << " rows)\n";
  return kOk;
}

// ---------------------------------------------------------------- semivariogram

std::vector<double> curve_distances(const Config& cfg, double default_max) {
  if (cfg.has("distances")) return cfg.get_double_list("distances");
  const double max = cfg.get_double("max_distance", default_max);
  const long long n = cfg.get_int("n_bins", 20);
  if (n < 1) throw ValidationError("config key 'n_bins': expected an integer >= 1");
  if (!(max > 0.0)) throw ValidationError("config key 'max_distance': expected a value > 0");
  std::vector<double> d;
  for (long long i = 1; i <= n; ++i) d.push_back(max * static_cast<double>(i) / static_cast<double>(n + 1));
  return d;
}

double sigma2_from(const Config& cfg) {
  if (cfg.has("sigma") && cfg.has("sigma2")) throw ValidationError("give either 'sigma' or 'sigma2', not both");
  const double s2 = cfg.has("sigma") ? std::pow(cfg.get_double("sigma"), 2) : cfg.get_double("sigma2", 0.0);
  if (!(s2 >= 0.0)) throw ValidationError("config key 'sigma2': expected a value >= 0");
  return s2;
}

int cmd_semivariogram(Context& ctx) {
  const Config& cfg = ctx.cfg;
  const std::string mode = cfg.get_string("mode", "theoretical");
  std::vector<std::pair<std::string, std::string>> extra{{"mode", mode}};
  SemivariogramCurve curve;
  if (mode == "empirical") {
    cfg.reject_unknown(with({}, {"mode", "data", "covariates", "response", "max_distance", "n_bins", "output"}));
    cfg.require({"data", "covariates", "response"});
    const Table table = read_csv_file(cfg.get_string("data"));
    const RowMatrix X = table.select(cfg.get_list("covariates"));
    const Eigen::VectorXd y = table.select({cfg.get_string("response")}).col(0);
    if (!X.allFinite() || !y.allFinite()) throw IngestionError("non-finite value in the semivariogram data");
    double max_pair = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      for (Eigen::Index j = i + 1; j < X.rows(); ++j) max_pair = std::max(max_pair, (X.row(i) - X.row(j)).norm());
    const long long n_bins = cfg.get_int("n_bins", 20);
    if (n_bins < 1) throw ValidationError("config key 'n_bins': expected an integer >= 1");
    const double max = cfg.get_double("max_distance", max_pair);
    if (!(max > 0.0)) throw ValidationError("config key 'max_distance': expected a value > 0");
    curve = empirical_semivariogram(X, y, equal_width_bins(max, static_cast<std::size_t>(n_bins)));
    std::string empty;
    for (double c : curve.empty_bins) empty += (empty.empty() ? "" : " ") + fmt(c);
    extra.emplace_back("empty-bins", empty.empty() ? "none" : empty);
  } else if (mode == "theoretical" || mode == "mixing") {
    const std::set<std::string> keys{"mode", "p", "distances", "max_distance", "n_bins", "domain_side",
                                     "n_points", "n_directions", "n_draws", "sigma", "sigma2",
                                     "y_min", "y_max", "output"};
    if (mode == "mixing") cfg.reject_unknown(with(hyperparameter_keys(), keys), {"kernel.", "kernel_mean."});
    else cfg.reject_unknown(with(hyperparameter_keys(), keys));
    Hyperparameters hyper = hyperparameters_from(cfg);
    const long long p = cfg.get_int("p", 1);
    if (p < 1) throw ValidationError("config key 'p': expected an integer >= 1");
    DomainAverage avg;
    avg.side = cfg.get_double("domain_side", 1.0);
    if (!(avg.side > 0.0)) throw ValidationError("config key 'domain_side': expected a value > 0");
    avg.n_points = static_cast<int>(cfg.get_int("n_points", avg.n_points));
    avg.n_directions = static_cast<int>(cfg.get_int("n_directions", avg.n_directions));
    if (avg.n_points < 1) throw ValidationError("config key 'n_points': expected an integer >= 1");
    if (avg.n_directions < 1) throw ValidationError("config key 'n_directions': expected an integer >= 1");
    McSettings mc{static_cast<int>(cfg.get_int("n_draws", 200)), ctx.seed, ctx.threads};
    if (mc.n_draws < 1) throw ValidationError("config key 'n_draws': expected an integer >= 1");
    const double sigma2 = sigma2_from(cfg);
    const auto distances = curve_distances(cfg, avg.side * std::sqrt(static_cast<double>(p)));
    if (mode == "theoretical") {
      const double ymin = cfg.get_double("y_min", -1.0);
      const double ymax = cfg.get_double("y_max", 1.0);
      if (!(ymax > ymin)) throw ValidationError("config key 'y_max': must exceed 'y_min'");
      curve = nu_bar(hyper, regression_scale(hyper, {ymin, ymax}), sigma2, static_cast<std::size_t>(p),
                     distances, avg, mc);
    } else {
      EmulatorKernelSpec kernels;
      const auto keys_found = cfg.keys_with_prefix("kernel.");
      if (keys_found.empty()) throw ValidationError("mixing mode needs 'kernel.<n> = <family> <params...>' entries");
      for (const auto& key : keys_found) {
        const std::string label = key.substr(std::string("kernel.").size());
        std::istringstream spec(cfg.get_string(key));
        std::string family;
        spec >> family;
        std::vector<double> params;
        std::string tok;
        while (spec >> tok) {
          try {
            params.push_back(std::stod(tok));
          } catch (const std::exception&) {
            throw ValidationError("config key '" + key + "': bad kernel parameter '" + tok + "'");
          }
        }
        EmulatorSpec e;
        try {
          e.kernel = KernelRegistry::instance().make(family, params);
        } catch (const ContractError& ex) {
          throw ValidationError("config key '" + key + "': " + ex.what());
        }
        e.mean = cfg.get_double("kernel_mean." + label, 0.0);
        kernels.push_back(std::move(e));
      }
      for (const auto& key : cfg.keys_with_prefix("kernel_mean."))
        if (!cfg.has("kernel." + key.substr(std::string("kernel_mean.").size())))
          throw ValidationError("config key '" + key + "' has no matching kernel entry");
      hyper.K = static_cast<int>(kernels.size());
      curve = mixing_nu_bar(hyper, sigma2, kernels, static_cast<std::size_t>(p), distances, avg, mc);
    }
    extra.emplace_back("sill", fmt(curve.sill));
    extra.emplace_back("draws", std::to_string(mc.n_draws));
  } else {
    throw ValidationError("config key 'mode': expected 'theoretical', 'empirical' or 'mixing', got '" + mode + "'");
  }
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < curve.distance.size(); ++i)
    rows.push_back({curve.distance[i], curve.value[i], curve.uncertainty[i]});
  const std::string path = ctx.path(cfg.get_string("output", "semivariogram.csv"));
  write_csv_file(path, ctx.meta(extra), {"distance", "value", "se_or_count"}, rows);
  *ctx.log << "wrote " << path << '\n';
  return kOk;
}

// ---------------------------------------------------------------- project

int cmd_project(Context& ctx) {
  const Config& cfg = ctx.cfg;
  cfg.reject_unknown(with(kGridKeys, {"archive", "data", "validation", "kind", "temperature", "temperatures",
                                      "output"}));
  cfg.require({"archive", "data"});
  const Posterior post = load_posterior_file(cfg.get_string("archive"));
  if (post.mode != FitMode::Mixing) throw ValidationError("projection needs a mixing archive, got a regression fit");
  if (post.draws.empty()) throw ValidationError("the archive holds no posterior draws");
  const std::string kind_name = cfg.get_string("kind", "sparsegen");
  ProjectionKind kind;
  if (kind_name == "sparsegen") kind = ProjectionKind::Sparsegen;
  else if (kind_name == "softmax") kind = ProjectionKind::Softmax;
  else throw ValidationError("config key 'kind': expected 'sparsegen' or 'softmax', got '" + kind_name + "'");
  auto check_t = [&](double t, const std::string& key) {
    if (kind == ProjectionKind::Sparsegen ? !(t >= 0.0 && t < 1.0) : !(t > 0.0))
      throw ValidationError("config key '" + key + "': temperature " + fmt(t) + " is out of range for " + kind_name);
  };

  const Table table = read_csv_file(cfg.get_string("data"));
  const RowMatrix X = table.select(post.covariates);
  const RowMatrix F = model_outputs(cfg, table, post.models);
  const WeightDraws w = weights_at(post, X, ctx.threads);

  std::vector<std::pair<std::string, std::string>> extra{{"kind", kind_name},
                                                         {"objective", "sum of squared posterior-mean discrepancy"}};
  double T = 0.0;
  if (cfg.has("temperature") && cfg.has("temperatures"))
    throw ValidationError("give either 'temperature' or 'temperatures', not both");
  if (cfg.has("temperature")) {
    T = cfg.get_double("temperature");
    check_t(T, "temperature");
  } else {
    std::vector<double> grid = cfg.has("temperatures") ? cfg.get_double_list("temperatures") : default_temperature_grid();
    if (grid.empty()) throw ValidationError("config key 'temperatures': empty grid");
    if (kind == ProjectionKind::Softmax && !cfg.has("temperatures"))
      throw ValidationError("softmax projection needs 'temperature' or 'temperatures'");
    for (double t : grid) check_t(t, "temperatures");
    WeightDraws wv = w;
    RowMatrix Fv = F;
    if (cfg.has("validation")) {
      const Table vt = read_csv_file(cfg.get_string("validation"));
      wv = weights_at(post, vt.select(post.covariates), ctx.threads);
      Fv = model_outputs(cfg, vt, post.models);
    }
    const TemperatureChoice choice = select_temperature(grid, wv, Fv, kind);
    T = choice.temperature;
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < choice.candidates.size(); ++i) rows.push_back({choice.candidates[i], choice.objective[i]});
    write_csv_file(ctx.path("temperature_objective.csv"), ctx.meta(extra), {"temperature", "objective"}, rows);
  }
  extra.emplace_back("temperature", fmt(T));

  const WeightDraws u = project_draws(w, kind, T);
  std::vector<std::string> header = post.covariates;
  auto rows = coordinate_rows(X);
  if (X.rows() > 0) {
    for (std::size_t l = 0; l < post.models.size(); ++l) {
      Eigen::MatrixXd ul(static_cast<Eigen::Index>(u.size()), X.rows());
      for (std::size_t d = 0; d < u.size(); ++d) ul.row(static_cast<Eigen::Index>(d)) = u[d].col(static_cast<Eigen::Index>(l)).transpose();
      append_summary(rows, summarize(ul));
    }
    append_summary(rows, summarize(discrepancy_draws(w, u, F)));
    append_summary(rows, summarize(sum_of_weights(w)));
  }
  for (const auto& m : post.models) append_summary_header(header, "u_" + m);
  append_summary_header(header, "delta");
  append_summary_header(header, "w_sum");
  const std::string path = ctx.path(cfg.get_string("output", "projection.csv"));
  write_csv_file(path, ctx.meta(extra), header, rows);
  *ctx.log << "wrote " << path << " (temperature " << fmt(T) << ")\n";
  return kOk;
}

// ---------------------------------------------------------------- regrid

int cmd_regrid(Context& ctx) {
  const Config& cfg = ctx.cfg;
  cfg.reject_unknown(with(kGridKeys, {"data", "output"}));
  cfg.require({"data", "model_grids", "grid_coords"});
  const Table table = read_csv_file(cfg.get_string("data"));
  const auto coords = cfg.get_list("grid_coords");
  if (coords.size() != 2) throw ValidationError("config key 'grid_coords': expected two column names");
  const auto ids = model_ids(cfg);
  const RowMatrix F = model_outputs(cfg, table, ids);
  auto rows = coordinate_rows(table.select(coords));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (Eigen::Index l = 0; l < F.cols(); ++l) rows[i].push_back(F(static_cast<Eigen::Index>(i), l));
  std::vector<std::string> header = coords;
  header.insert(header.end(), ids.begin(), ids.end());
  const std::string path = ctx.path(cfg.get_string("output", "regrid.csv"));
  write_csv_file(path, ctx.meta(), header, rows);
  *ctx.log << "wrote " << path << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Smooth Bayesian additive regression trees and model mixing"};
  app.require_subcommand(1);
  Flags flags;
  std::string chosen;
  auto add = [&](const std::string& name, const std::string& help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", flags.config, "Configuration file (key = value)")->required();
    sub->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& s) { flags.seed = s; },
                                            "Random seed (overrides the config)");
    sub->add_option_function<std::string>("--out", [&](const std::string& d) { flags.out = d; },
                                          "Output directory (overrides the config)");
    sub->add_option_function<int>("--threads", [&](const int& t) { flags.threads = t; },
                                  "Worker threads (overrides the config)");
    sub->callback([&, name] { chosen = name; });
  };
  add("fit", "Fit a regression or mixing model and write a posterior archive");
  add("predict", "Predict from a posterior archive");
  add("semivariogram", "Theoretical, mixing or empirical semivariogram table");
  add("project", "Simplex projections of mixing weights and discrepancy");
  add("regrid", "Bilinear interpolation of gridded model output");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kValidation;
  }

  try {
    Context ctx = make_context(chosen, flags);
    ctx.log = &out;
    if (chosen == "fit") return cmd_fit(ctx);
    if (chosen == "predict") return cmd_predict(ctx);
    if (chosen == "semivariogram") return cmd_semivariogram(ctx);
    if (chosen == "project") return cmd_project(ctx);
    return cmd_regrid(ctx);
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << '\n';
    return kValidation;
  } catch (const ContractError& e) {
    err << "validation error: " << e.what() << '\n';
    return kValidation;
  } catch (const IngestionError& e) {
    err << "ingestion error: " << e.what() << '\n';
    return kIngestion;
  } catch (const FormatError& e) {
    err << "ingestion error: " << e.what() << '\n';
    return kIngestion;
  } catch (const DomainError& e) {
    err << "ingestion error: " << e.what() << '\n';
    return kIngestion;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
}

}  // namespace rpbart::cli
