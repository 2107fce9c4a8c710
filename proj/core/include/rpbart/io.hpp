#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rpbart/mixing.hpp"
#include "rpbart/model.hpp"

namespace rpbart {

/// Version written into every table header and archive.
inline constexpr int kFormatVersion = 1;

/// Numeric CSV table: header row plus rows of doubles.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const;
  std::optional<std::size_t> find(const std::string& name) const;
  /// Selected columns as a row-major matrix; missing columns are all listed in one error.
  RowMatrix select(const std::vector<std::string>& names) const;
};

/// Comma-delimited, '.' decimal, header row required. Lines starting with
/// '#' and blank lines are skipped. Empty cells and "NA"/"nan" read as NaN.
/// Errors carry the source name and line number.
Table read_csv(std::istream& in, const std::string& source = "<input>");
Table read_csv_file(const std::string& path);

/// Provenance comment lines written above the header of every table.
struct TableMeta {
  std::string command;
  std::string config_hash;
  std::vector<std::pair<std::string, std::string>> extra;
};

/// Doubles are printed with 17 significant digits (round-trip exact).
void write_csv(std::ostream& out, const TableMeta& meta, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);
void write_csv_file(const std::string& path, const TableMeta& meta,
                    const std::vector<std::string>& header,
                    const std::vector<std::vector<double>>& rows);

/// Flat "key = value" configuration with '#' comments.
class Config {
 public:
  static Config parse(std::istream& in, const std::string& source = "<config>");
  static Config load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, const std::string& value);

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Comma-separated list, items trimmed; empty when absent.
  std::vector<std::string> get_list(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;

  /// Keys starting with `prefix`, in sorted order.
  std::vector<std::string> keys_with_prefix(const std::string& prefix) const;

  /// Throws ValidationError naming every key that is neither in `allowed`
  /// nor starts with one of `allowed_prefixes`.
  void reject_unknown(const std::set<std::string>& allowed,
                      const std::vector<std::string>& allowed_prefixes = {}) const;
  void require(const std::vector<std::string>& keys) const;

  /// FNV-1a (64-bit, hex) of the sorted "key=value" lines, skipping `ignore`.
  std::string hash(const std::set<std::string>& ignore = {}) const;

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, int> lines_;
  std::string source_;
};

/// Hyperparameters from config keys; ranges are checked and a failing key is named.
Hyperparameters hyperparameters_from(const Config& cfg);
/// Config keys read by hyperparameters_from.
const std::set<std::string>& hyperparameter_keys();

/// Line-oriented text archive of a posterior; doubles in hexadecimal
/// floating point so reloading is exact.
void save_posterior(std::ostream& out, const Posterior& post);
void save_posterior_file(const std::string& path, const Posterior& post);
/// Throws FormatError on a version mismatch or a malformed body.
Posterior load_posterior(std::istream& in);
Posterior load_posterior_file(const std::string& path);

/// Long-format grid file (axis0, axis1, value columns) to a ModelOutputGrid.
ModelOutputGrid read_model_grid(const std::string& path, const std::string& id);

}  // namespace rpbart
