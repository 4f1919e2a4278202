#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace lsinet::data {

/// Multivariate series in file order. Values are row-major [T x V].
struct SeriesTable {
  std::vector<std::string> timestamps;
  std::vector<std::string> variable_names;
  std::vector<double> values;
  // Non-fatal findings from loading (dropped rows, unordered timestamps).
  std::vector<std::string> warnings;

  std::size_t length() const { return timestamps.size(); }
  std::size_t num_variables() const { return variable_names.size(); }
  double at(std::size_t t, std::size_t v) const { return values[t * num_variables() + v]; }
  double& at(std::size_t t, std::size_t v) { return values[t * num_variables() + v]; }
};

struct CsvSchema {
  // Subset of variable columns to keep, in this order. Empty keeps all.
  std::vector<std::string> columns;
};

// First column is a timestamp, the rest numeric. A header row is required.
// Rows with an empty cell are dropped (reported in warnings). Any other
// unparseable cell throws LoadError naming its row and column.
SeriesTable load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
SeriesTable parse_csv(std::istream& in, const std::string& source_name,
                      const CsvSchema& schema = {});

/// Per-variable z-scoring with statistics from a row range.
struct StandardScaler {
  std::vector<double> mean;
  std::vector<double> scale;

  static StandardScaler fit(const SeriesTable& table, std::size_t row_begin,
                            std::size_t row_end);
  void transform(SeriesTable& table) const;
};

}  // namespace lsinet::data
