#include "lsinet/data/series_table.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string_view>

#include "lsinet/errors.hpp"

namespace lsinet::data {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' ||
                        s.back() == '"')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_cells(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(trim(line.substr(start)));
      break;
    }
    cells.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return cells;
}

bool parse_double(std::string_view cell, double& out) {
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

}  // namespace

SeriesTable parse_csv(std::istream& in, const std::string& source_name,
                      const CsvSchema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw LoadError(source_name + ": empty file, header row required");
  std::vector<std::string> header;
  for (auto cell : split_cells(line)) header.emplace_back(cell);
  if (header.size() < 2) {
    throw LoadError(source_name + ": need a timestamp column and at least one variable");
  }

  // File column index for each kept variable.
  std::vector<std::size_t> picks;
  SeriesTable table;
  if (schema.columns.empty()) {
    for (std::size_t c = 1; c < header.size(); ++c) {
      picks.push_back(c);
      table.variable_names.emplace_back(header[c]);
    }
  } else {
    for (const auto& wanted : schema.columns) {
      std::size_t found = 0;
      for (std::size_t c = 1; c < header.size(); ++c) {
        if (header[c] == wanted) found = c;
      }
      if (found == 0) throw LoadError(source_name + ": no column named '" + wanted + "'");
      picks.push_back(found);
      table.variable_names.push_back(wanted);
    }
  }

  std::size_t row_number = 1;  // 1-based, header is row 1
  std::size_t dropped = 0;
  bool unordered_reported = false;
  std::vector<double> row_values(picks.size());
  while (std::getline(in, line)) {
    ++row_number;
    if (trim(line).empty()) continue;
    const auto cells = split_cells(line);
    if (cells.size() != header.size()) {
      throw LoadError(source_name + ": row " + std::to_string(row_number) + " has " +
                      std::to_string(cells.size()) + " cells, header has " +
                      std::to_string(header.size()));
    }
    bool missing = cells[0].empty();
    for (std::size_t k = 0; k < picks.size() && !missing; ++k) {
      const std::string_view cell = cells[picks[k]];
      if (cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan") {
        missing = true;
        break;
      }
      if (!parse_double(cell, row_values[k])) {
        throw LoadError(source_name + ": cannot parse '" + std::string(cell) + "' at row " +
                        std::to_string(row_number) + ", column " +
                        std::to_string(picks[k] + 1) + " (" + header[picks[k]] +
                        ")");
      }
    }
    if (missing) {
      ++dropped;
      continue;
    }
    std::string stamp(cells[0]);
    if (!unordered_reported && !table.timestamps.empty() && stamp < table.timestamps.back()) {
      table.warnings.push_back(source_name + ": timestamps not monotone at row " +
                               std::to_string(row_number) + "; file order kept");
      unordered_reported = true;
    }
    table.timestamps.push_back(std::move(stamp));
    table.values.insert(table.values.end(), row_values.begin(), row_values.end());
  }
  if (dropped > 0) {
    table.warnings.push_back(source_name + ": dropped " + std::to_string(dropped) +
                             " row(s) with missing cells");
  }
  return table;
}

SeriesTable load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open dataset file " + path.string());
  return parse_csv(in, path.filename().string(), schema);
}

StandardScaler StandardScaler::fit(const SeriesTable& table, std::size_t row_begin,
                                   std::size_t row_end) {
  if (row_end <= row_begin || row_end > table.length()) {
    throw ConfigError("scaler fit range [" + std::to_string(row_begin) + ", " +
                      std::to_string(row_end) + ") is empty or out of bounds");
  }
  const std::size_t vars = table.num_variables();
  const double count = static_cast<double>(row_end - row_begin);
  StandardScaler scaler;
  scaler.mean.assign(vars, 0.0);
  scaler.scale.assign(vars, 0.0);
  for (std::size_t t = row_begin; t < row_end; ++t)
    for (std::size_t v = 0; v < vars; ++v) scaler.mean[v] += table.at(t, v);
  for (auto& m : scaler.mean) m /= count;
  for (std::size_t t = row_begin; t < row_end; ++t) {
    for (std::size_t v = 0; v < vars; ++v) {
      const double d = table.at(t, v) - scaler.mean[v];
      scaler.scale[v] += d * d;
    }
  }
  for (auto& s : scaler.scale) {
    s = std::sqrt(s / count);
    if (s == 0.0) s = 1.0;  // constant column: centre only
  }
  return scaler;
}

void StandardScaler::transform(SeriesTable& table) const {
  const std::size_t vars = table.num_variables();
  for (std::size_t t = 0; t < table.length(); ++t)
    for (std::size_t v = 0; v < vars; ++v)
      table.at(t, v) = (table.at(t, v) - mean[v]) / scale[v];
}

}  // namespace lsinet::data
