#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lyapgdm/env.hpp"
#include "lyapgdm/trainer.hpp"

namespace lyapgdm::csv {

// A parsed CSV file: header, data rows, and the '#' lines (prefix stripped).
struct Table {
  std::string name;  // file name used in error messages
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> row_lines;  // source line of each row
  std::vector<std::string> comments;

  std::size_t column(std::string_view col) const;  // FormatError if absent
  double number(std::size_t row, std::string_view col) const;
  // Value of a "# key=value" line, if present.
  std::optional<std::string> footer(std::string_view key) const;
};

// FormatError names the file and the offending line.
Table parse_table(std::string_view text, std::string_view name);
Table read_table(const std::string& path);

std::string join_row(const std::vector<std::string>& cells);

std::vector<std::string> metrics_header();
std::string metrics_row(const rl::EpisodeMetrics& m);

std::vector<std::string> trace_header(int num_devices);
std::string trace_row(int episode, const env::SlotInfo& info);

std::vector<std::string> sweep_header();

// Validating readers: check the header and per-row invariants; FormatError
// names the offending row (1-based, counting the header as line 1).
void validate_metrics(const Table& t);
void validate_trace(const Table& t, const env::EnvConfig& cfg);
void validate_sweep(const Table& t);

}  // namespace lyapgdm::csv
