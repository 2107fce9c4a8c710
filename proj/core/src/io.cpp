#include "rpbart/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "rpbart/errors.hpp"

namespace rpbart {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, sep)) out.push_back(trim(cell));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return std::nullopt;
  return v;
}

std::string hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

std::string dec(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------- tables

std::optional<std::size_t> Table::find(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) return std::nullopt;
  return static_cast<std::size_t>(it - header.begin());
}

std::size_t Table::column(const std::string& name) const {
  if (auto c = find(name)) return *c;
  throw IngestionError("missing column: " + name);
}

RowMatrix Table::select(const std::vector<std::string>& names) const {
  std::vector<std::string> missing;
  std::vector<std::size_t> idx;
  for (const auto& n : names) {
    if (auto c = find(n)) idx.push_back(*c);
    else missing.push_back(n);
  }
  if (!missing.empty()) {
    std::string msg = "missing column(s):";
    for (const auto& m : missing) msg += " " + m;
    throw IngestionError(msg);
  }
  RowMatrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < idx.size(); ++c)
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][idx[c]];
  return out;
}

Table read_csv(std::istream& in, const std::string& source) {
  Table t;
  std::string line;
  int lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    auto cells = split(line, ',');
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    if (!have_header) {
      for (const auto& c : cells)
        if (c.empty()) throw IngestionError(where + "empty column name in header");
      for (std::size_t i = 0; i < cells.size(); ++i)
        for (std::size_t j = i + 1; j < cells.size(); ++j)
          if (cells[i] == cells[j]) throw IngestionError(where + "duplicate column '" + cells[i] + "'");
      t.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.header.size())
      throw IngestionError(where + "expected " + std::to_string(t.header.size()) + " fields, found " +
                           std::to_string(cells.size()));
    std::vector<double> row(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string& s = cells[c];
      if (s.empty() || s == "NA" || s == "nan" || s == "NaN") {
        row[c] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      const auto v = parse_double(s);
      if (!v) throw IngestionError(where + "column '" + t.header[c] + "': not a number: '" + s + "'");
      row[c] = *v;
    }
    t.rows.push_back(std::move(row));
  }
  if (!have_header) throw IngestionError(source + ": missing header row");
  return t;
}

Table read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open '" + path + "'");
  return read_csv(in, path);
}

void write_csv(std::ostream& out, const TableMeta& meta, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  out << "# format-version: " << kFormatVersion << '\n';
  out << "# command: " << meta.command << '\n';
  out << "# config-hash: " << meta.config_hash << '\n';
  for (const auto& [k, v] : meta.extra) out << "# " << k << ": " << v << '\n';
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << dec(row[c]);
    out << '\n';
  }
}

void write_csv_file(const std::string& path, const TableMeta& meta,
                    const std::vector<std::string>& header,
                    const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  write_csv(out, meta, header, rows);
  if (!out) throw Error("write to '" + path + "' failed");
}

// ---------------------------------------------------------------- config

Config Config::parse(std::istream& in, const std::string& source) {
  Config cfg;
  cfg.source_ = source;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ValidationError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ValidationError(where + "empty key");
    if (cfg.values_.count(key)) throw ValidationError(where + "duplicate key '" + key + "'");
    cfg.values_[key] = trim(line.substr(eq + 1));
    cfg.lines_[key] = lineno;
  }
  return cfg;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open config '" + path + "'");
  return parse(in, path);
}

void Config::set(const std::string& key, const std::string& value) { values_[key] = value; }

namespace {
[[noreturn]] void bad_value(const std::string& key, const std::string& what, const std::string& got) {
  throw ValidationError("config key '" + key + "': expected " + what + ", got '" + got + "'");
}
}  // namespace

std::string Config::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError("missing required config key '" + key + "'");
  return it->second;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? get_string(key) : fallback;
}

double Config::get_double(const std::string& key) const {
  const std::string s = get_string(key);
  const auto v = parse_double(s);
  if (!v || !std::isfinite(*v)) bad_value(key, "a finite number", s);
  return *v;
}

double Config::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

long long Config::get_int(const std::string& key) const {
  const std::string s = get_string(key);
  long long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) bad_value(key, "an integer", s);
  return v;
}

long long Config::get_int(const std::string& key, long long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string s = get_string(key);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  bad_value(key, "true or false", s);
}

std::vector<std::string> Config::get_list(const std::string& key) const {
  if (!has(key)) return {};
  auto items = split(get_string(key), ',');
  for (const auto& i : items)
    if (i.empty()) bad_value(key, "a comma-separated list without empty items", get_string(key));
  return items;
}

std::vector<double> Config::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& s : get_list(key)) {
    const auto v = parse_double(s);
    if (!v || !std::isfinite(*v)) bad_value(key, "a list of numbers", get_string(key));
    out.push_back(*v);
  }
  return out;
}

std::vector<std::string> Config::keys_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [k, _] : values_)
    if (k.rfind(prefix, 0) == 0) out.push_back(k);
  return out;
}

void Config::reject_unknown(const std::set<std::string>& allowed,
                            const std::vector<std::string>& allowed_prefixes) const {
  std::string unknown;
  for (const auto& [k, _] : values_) {
    if (allowed.count(k)) continue;
    const bool prefixed = std::any_of(allowed_prefixes.begin(), allowed_prefixes.end(),
                                      [&](const std::string& p) { return k.rfind(p, 0) == 0; });
    if (prefixed) continue;
    const auto line = lines_.find(k);
    unknown += " '" + k + "'";
    if (line != lines_.end()) unknown += " (line " + std::to_string(line->second) + ")";
  }
  if (!unknown.empty()) throw ValidationError("unknown config key(s):" + unknown);
}

void Config::require(const std::vector<std::string>& keys) const {
  for (const auto& k : keys)
    if (!has(k)) throw ValidationError("missing required config key '" + k + "'");
}

std::string Config::hash(const std::set<std::string>& ignore) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [k, v] : values_) {
    if (ignore.count(k)) continue;
    for (const char c : k + "=" + v + "\n") {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------- hyperparameters

const std::set<std::string>& hyperparameter_keys() {
  static const std::set<std::string> keys{"m",  "k",      "alpha", "beta", "a1",   "a2",   "q",
                                          "nu", "lambda", "n_cut", "burn", "draws", "thin", "adapt"};
  return keys;
}

Hyperparameters hyperparameters_from(const Config& cfg) {
  Hyperparameters h;
  auto positive = [&](const std::string& key, double fallback) {
    const double v = cfg.get_double(key, fallback);
    if (!(v > 0.0)) bad_value(key, "a value > 0", cfg.get_string(key));
    return v;
  };
  auto at_least = [&](const std::string& key, long long fallback, long long lo) {
    const long long v = cfg.get_int(key, fallback);
    if (v < lo) bad_value(key, "an integer >= " + std::to_string(lo), cfg.get_string(key));
    return v;
  };
  h.m = static_cast<int>(at_least("m", h.m, 1));
  h.k = positive("k", h.k);
  h.tree.alpha = cfg.get_double("alpha", h.tree.alpha);
  if (!(h.tree.alpha > 0.0 && h.tree.alpha < 1.0)) bad_value("alpha", "a value in (0, 1)", cfg.get_string("alpha"));
  h.tree.beta = cfg.get_double("beta", h.tree.beta);
  if (!(h.tree.beta >= 0.0)) bad_value("beta", "a value >= 0", cfg.get_string("beta"));
  h.bandwidth.a1 = positive("a1", h.bandwidth.a1);
  h.bandwidth.a2 = positive("a2", h.bandwidth.a2);
  h.bandwidth.q = positive("q", h.bandwidth.q);
  h.nu = positive("nu", h.nu);
  if (cfg.has("lambda")) h.lambda = positive("lambda", 1.0);
  h.n_cut = static_cast<std::size_t>(at_least("n_cut", static_cast<long long>(h.n_cut), 1));
  h.schedule.burn = static_cast<int>(at_least("burn", h.schedule.burn, 0));
  h.schedule.draws = static_cast<int>(at_least("draws", h.schedule.draws, 1));
  h.schedule.thin = static_cast<int>(at_least("thin", h.schedule.thin, 1));
  h.schedule.adapt = static_cast<int>(at_least("adapt", h.schedule.adapt, -1));
  return h;
}

// ---------------------------------------------------------------- archive

void save_posterior(std::ostream& out, const Posterior& post) {
  const auto& h = post.hyper;
  out << "rpbart-archive " << kFormatVersion << '\n';
  out << "mode " << (post.mode == FitMode::Regression ? "regression" : "mixing") << '\n';
  out << "p " << post.p() << '\n';
  out << "covariates " << post.covariates.size() << '\n';
  for (const auto& c : post.covariates) out << "name " << c << '\n';
  out << "models " << post.models.size() << '\n';
  for (const auto& m : post.models) out << "name " << m << '\n';
  for (std::size_t v = 0; v < post.p(); ++v)
    out << "scaling " << hex(post.scaling.lower[v]) << ' ' << hex(post.scaling.upper[v]) << '\n';
  out << "y_offset " << hex(post.y_offset) << '\n';
  out << "hyper m " << h.m << '\n';
  out << "hyper k " << hex(h.k) << '\n';
  out << "hyper alpha " << hex(h.tree.alpha) << '\n';
  out << "hyper beta " << hex(h.tree.beta) << '\n';
  out << "hyper a1 " << hex(h.bandwidth.a1) << '\n';
  out << "hyper a2 " << hex(h.bandwidth.a2) << '\n';
  out << "hyper q " << hex(h.bandwidth.q) << '\n';
  out << "hyper nu " << hex(h.nu) << '\n';
  out << "hyper lambda " << hex(h.lambda) << '\n';
  out << "hyper K " << h.K << '\n';
  out << "hyper n_cut " << h.n_cut << '\n';
  out << "hyper burn " << h.schedule.burn << '\n';
  out << "hyper draws " << h.schedule.draws << '\n';
  out << "hyper thin " << h.schedule.thin << '\n';
  out << "hyper adapt " << h.schedule.adapt << '\n';
  out << "seed " << post.seed << '\n';
  out << "draws " << post.draws.size() << '\n';
  for (const auto& d : post.draws) {
    out << "draw " << d.index << ' ' << hex(d.sigma2) << ' ' << d.trees.size() << '\n';
    for (const auto& t : d.trees) {
      out << "tree " << hex(t.gamma) << ' ' << t.tree.num_nodes() << '\n';
      int leaf = 0;
      for (const auto& rec : t.tree.preorder()) {
        if (!rec.leaf) {
          out << "I " << rec.rule.var << ' ' << rec.rule.cut << '\n';
          continue;
        }
        out << 'L';
        for (Eigen::Index l = 0; l < t.leaves.cols(); ++l) out << ' ' << hex(t.leaves(leaf, l));
        out << '\n';
        ++leaf;
      }
    }
  }
  out << "end\n";
}

void save_posterior_file(const std::string& path, const Posterior& post) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  save_posterior(out, post);
  if (!out) throw Error("write to '" + path + "' failed");
}

namespace {

class ArchiveReader {
 public:
  explicit ArchiveReader(std::istream& in) : in_(in) {}

  std::istringstream line(const std::string& tag) {
    std::string text;
    if (!std::getline(in_, text)) fail("unexpected end of archive, expected '" + tag + "'");
    ++lineno_;
    std::istringstream ss(text);
    std::string got;
    ss >> got;
    if (got != tag) fail("expected '" + tag + "', found '" + got + "'");
    ss >> std::ws;
    return ss;
  }

  template <class T>
  T value(std::istringstream& ss) {
    std::string tok;
    if (!(ss >> tok)) fail("missing value");
    if constexpr (std::is_same_v<T, double>) {
      const auto v = parse_double(tok);
      if (!v) fail("bad number '" + tok + "'");
      return *v;
    } else {
      T v{};
      const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size()) fail("bad integer '" + tok + "'");
      return v;
    }
  }

  template <class T>
  T tagged(const std::string& tag) {
    auto ss = line(tag);
    return value<T>(ss);
  }

  std::string rest(const std::string& tag) {
    auto ss = line(tag);
    std::string r;
    std::getline(ss, r);
    return r;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw FormatError("archive line " + std::to_string(lineno_) + ": " + msg);
  }

 private:
  std::istream& in_;
  int lineno_ = 0;
};

}  // namespace

Posterior load_posterior(std::istream& in) {
  ArchiveReader r(in);
  Posterior post;
  const int version = r.tagged<int>("rpbart-archive");
  if (version != kFormatVersion)
    throw FormatError("archive format version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kFormatVersion) + ")");
  const std::string mode = r.rest("mode");
  if (mode == "regression") post.mode = FitMode::Regression;
  else if (mode == "mixing") post.mode = FitMode::Mixing;
  else r.fail("unknown mode '" + mode + "'");
  const auto p = r.tagged<std::size_t>("p");
  const auto n_cov = r.tagged<std::size_t>("covariates");
  for (std::size_t i = 0; i < n_cov; ++i) post.covariates.push_back(r.rest("name"));
  const auto n_models = r.tagged<std::size_t>("models");
  for (std::size_t i = 0; i < n_models; ++i) post.models.push_back(r.rest("name"));
  for (std::size_t v = 0; v < p; ++v) {
    auto ss = r.line("scaling");
    post.scaling.lower.push_back(r.value<double>(ss));
    post.scaling.upper.push_back(r.value<double>(ss));
  }
  post.y_offset = r.tagged<double>("y_offset");
  auto hyper_line = [&](const std::string& key) {
    auto ss = r.line("hyper");
    std::string k;
    ss >> k;
    if (k != key) r.fail("expected hyperparameter '" + key + "', found '" + k + "'");
    return ss;
  };
  auto& h = post.hyper;
  { auto ss = hyper_line("m"); h.m = r.value<int>(ss); }
  { auto ss = hyper_line("k"); h.k = r.value<double>(ss); }
  { auto ss = hyper_line("alpha"); h.tree.alpha = r.value<double>(ss); }
  { auto ss = hyper_line("beta"); h.tree.beta = r.value<double>(ss); }
  { auto ss = hyper_line("a1"); h.bandwidth.a1 = r.value<double>(ss); }
  { auto ss = hyper_line("a2"); h.bandwidth.a2 = r.value<double>(ss); }
  { auto ss = hyper_line("q"); h.bandwidth.q = r.value<double>(ss); }
  { auto ss = hyper_line("nu"); h.nu = r.value<double>(ss); }
  { auto ss = hyper_line("lambda"); h.lambda = r.value<double>(ss); }
  { auto ss = hyper_line("K"); h.K = r.value<int>(ss); }
  { auto ss = hyper_line("n_cut"); h.n_cut = r.value<std::size_t>(ss); }
  { auto ss = hyper_line("burn"); h.schedule.burn = r.value<int>(ss); }
  { auto ss = hyper_line("draws"); h.schedule.draws = r.value<int>(ss); }
  { auto ss = hyper_line("thin"); h.schedule.thin = r.value<int>(ss); }
  { auto ss = hyper_line("adapt"); h.schedule.adapt = r.value<int>(ss); }
  post.seed = r.tagged<std::uint64_t>("seed");
  if (post.mode == FitMode::Mixing && static_cast<std::size_t>(h.K) != post.models.size())
    r.fail("K does not match the model list");
  if (h.n_cut < 1 || p < 1) r.fail("bad grid description");
  post.grid = CutpointGrid::uniform(p, h.n_cut);

  const auto n_draws = r.tagged<std::size_t>("draws");
  const auto K = static_cast<Eigen::Index>(post.K());
  post.draws.resize(n_draws);
  for (auto& d : post.draws) {
    auto ss = r.line("draw");
    d.index = r.value<std::size_t>(ss);
    d.sigma2 = r.value<double>(ss);
    const auto n_trees = r.value<std::size_t>(ss);
    d.trees.resize(n_trees);
    for (auto& t : d.trees) {
      auto ts = r.line("tree");
      t.gamma = r.value<double>(ts);
      const auto n_nodes = r.value<std::size_t>(ts);
      std::vector<NodeRecord> records;
      std::vector<std::vector<double>> leaves;
      for (std::size_t i = 0; i < n_nodes; ++i) {
        std::string text;
        if (!std::getline(in, text)) r.fail("unexpected end of archive inside a tree");
        std::istringstream ns(text);
        std::string kind;
        ns >> kind;
        if (kind == "I") {
          NodeRecord rec;
          rec.leaf = false;
          rec.rule.var = r.value<int>(ns);
          rec.rule.cut = r.value<int>(ns);
          if (rec.rule.var < 0 || static_cast<std::size_t>(rec.rule.var) >= p ||
              rec.rule.cut < 0 || static_cast<std::size_t>(rec.rule.cut) >= h.n_cut)
            r.fail("split rule outside the grid");
          records.push_back(rec);
        } else if (kind == "L") {
          records.push_back(NodeRecord{});
          std::vector<double> mu(static_cast<std::size_t>(K));
          for (double& v : mu) v = r.value<double>(ns);
          leaves.push_back(std::move(mu));
        } else {
          r.fail("bad node record '" + kind + "'");
        }
      }
      try {
        t.tree = Tree::from_preorder(std::move(records));
      } catch (const Error& e) {
        r.fail(std::string("malformed tree: ") + e.what());
      }
      t.leaves.resize(static_cast<Eigen::Index>(leaves.size()), K);
      for (std::size_t b = 0; b < leaves.size(); ++b)
        for (Eigen::Index l = 0; l < K; ++l) t.leaves(static_cast<Eigen::Index>(b), l) = leaves[b][static_cast<std::size_t>(l)];
    }
  }
  r.line("end");
  return post;
}

Posterior load_posterior_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open archive '" + path + "'");
  return load_posterior(in);
}

ModelOutputGrid read_model_grid(const std::string& path, const std::string& id) {
  const Table t = read_csv_file(path);
  if (t.header.size() != 3) throw IngestionError(path + ": grid files need exactly three columns (axis0, axis1, value)");
  ModelOutputGrid g;
  g.id = id;
  for (std::size_t a = 0; a < 2; ++a) {
    auto& ax = g.axes[a];
    for (const auto& row : t.rows) ax.push_back(row[a]);
    std::sort(ax.begin(), ax.end());
    ax.erase(std::unique(ax.begin(), ax.end()), ax.end());
  }
  g.values = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(g.axes[0].size()),
                                       static_cast<Eigen::Index>(g.axes[1].size()),
                                       std::numeric_limits<double>::quiet_NaN());
  for (const auto& row : t.rows) {
    if (!std::isfinite(row[0]) || !std::isfinite(row[1]) || !std::isfinite(row[2]))
      throw IngestionError(path + ": non-finite grid entry");
    const auto i = std::lower_bound(g.axes[0].begin(), g.axes[0].end(), row[0]) - g.axes[0].begin();
    const auto j = std::lower_bound(g.axes[1].begin(), g.axes[1].end(), row[1]) - g.axes[1].begin();
    g.values(i, j) = row[2];
  }
  if (!g.values.allFinite())
    throw IngestionError(path + ": grid is not a complete rectilinear product of its axes");
  g.validate();
  return g;
}

}  // namespace rpbart
