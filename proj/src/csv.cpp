#include "lyapgdm/csv.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "lyapgdm/config.hpp"
#include "lyapgdm/errors.hpp"

namespace lyapgdm::csv {

namespace {

using config::format_double;

std::vector<std::string> split_cells(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t begin = 0;
  while (true) {
    const std::size_t pos = line.find(',', begin);
    cells.emplace_back(line.substr(begin, pos - begin));
    if (pos == std::string_view::npos) break;
    begin = pos + 1;
  }
  return cells;
}

[[noreturn]] void fail(const Table& t, std::size_t row, const std::string& what) {
  throw FormatError(t.name + " line " + std::to_string(t.row_lines.at(row)) + ": " + what);
}

void expect_header(const Table& t, const std::vector<std::string>& want) {
  if (t.header != want) {
    throw FormatError(t.name + " line 1: header '" + join_row(t.header) + "' does not match '" +
                      join_row(want) + "'");
  }
}

}  // namespace

std::size_t Table::column(std::string_view col) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == col) return i;
  }
  throw FormatError(name + ": missing column '" + std::string(col) + "'");
}

double Table::number(std::size_t row, std::string_view col) const {
  const std::string& cell = rows.at(row).at(column(col));
  try {
    return config::parse_double(cell, col);
  } catch (const ConfigError&) {
    fail(*this, row, "column " + std::string(col) + " is not a number: '" + cell + "'");
  }
}

std::optional<std::string> Table::footer(std::string_view key) const {
  const std::string prefix = std::string(key) + "=";
  for (const std::string& c : comments) {
    if (c.rfind(prefix, 0) == 0) return c.substr(prefix.size());
  }
  return std::nullopt;
}

Table parse_table(std::string_view text, std::string_view name) {
  Table t;
  t.name = std::string(name);
  int line_no = 0;
  std::size_t begin = 0;
  bool have_header = false;
  while (begin < text.size()) {
    std::size_t end = text.find('\n', begin);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(begin, end - begin);
    begin = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (line.front() == '#') {
      line.remove_prefix(1);
      if (!line.empty() && line.front() == ' ') line.remove_prefix(1);
      t.comments.emplace_back(line);
      continue;
    }
    if (!have_header) {
      t.header = split_cells(line);
      have_header = true;
      continue;
    }
    auto cells = split_cells(line);
    if (cells.size() != t.header.size()) {
      throw FormatError(t.name + " line " + std::to_string(line_no) + ": expected " +
                        std::to_string(t.header.size()) + " cells, found " + std::to_string(cells.size()));
    }
    t.rows.push_back(std::move(cells));
    t.row_lines.push_back(line_no);
  }
  if (!have_header) throw FormatError(t.name + ": missing header row");
  return t;
}

Table read_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_table(ss.str(), path);
}

std::string join_row(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += cells[i];
  }
  return out;
}

std::vector<std::string> metrics_header() {
  return {"episode",  "reward_mean", "dpp_mean",    "rate_mean_mbps", "energy_mean_j",
          "queue_final", "actor_loss", "critic_loss", "steps",          "wall_ms"};
}

std::string metrics_row(const rl::EpisodeMetrics& m) {
  return join_row({std::to_string(m.episode), format_double(m.reward_mean), format_double(m.dpp_mean),
                   format_double(m.rate_mean_mbps), format_double(m.energy_mean_j),
                   format_double(m.queue_final), format_double(m.actor_loss), format_double(m.critic_loss),
                   std::to_string(m.steps), format_double(std::round(m.wall_ms * 1000.0) / 1000.0)});
}

std::vector<std::string> trace_header(int num_devices) {
  std::vector<std::string> h{"episode", "t", "x", "y", "vx", "vy"};
  for (int i = 1; i <= num_devices; ++i) h.push_back("b" + std::to_string(i));
  for (const char* c : {"rate_mbps", "energy_j", "queue", "reward"}) h.emplace_back(c);
  return h;
}

std::string trace_row(int episode, const env::SlotInfo& info) {
  std::vector<std::string> cells{std::to_string(episode), std::to_string(info.t),
                                 format_double(info.position.x), format_double(info.position.y),
                                 format_double(info.velocity.x), format_double(info.velocity.y)};
  for (double b : info.ratios) cells.push_back(format_double(b));
  cells.push_back(format_double(info.sum_rate_mbps));
  cells.push_back(format_double(info.energy_j));
  cells.push_back(format_double(info.queue));
  cells.push_back(format_double(info.reward));
  return join_row(cells);
}

std::vector<std::string> sweep_header() {
  return {"param", "value", "rate_mean_mbps", "energy_mean_j", "queue_final", "reward_mean"};
}

void validate_metrics(const Table& t) {
  expect_header(t, metrics_header());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (t.number(r, "episode") != static_cast<double>(r)) fail(t, r, "episodes must count up from 0");
    for (const std::string& col : metrics_header()) {
      if (!std::isfinite(t.number(r, col))) fail(t, r, col + " is not finite");
    }
    if (t.number(r, "steps") < 1) fail(t, r, "steps must be >= 1");
    if (t.number(r, "energy_mean_j") < 0.0) fail(t, r, "energy_mean_j must be >= 0");
    if (t.number(r, "queue_final") < 0.0) fail(t, r, "queue_final must be >= 0");
    if (t.number(r, "rate_mean_mbps") < 0.0) fail(t, r, "rate_mean_mbps must be >= 0");
  }
}

void validate_trace(const Table& t, const env::EnvConfig& cfg) {
  const int n = cfg.num_devices();
  expect_header(t, trace_header(n));
  const double tol = 1e-9;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    for (const std::string& col : t.header) {
      if (!std::isfinite(t.number(r, col))) fail(t, r, col + " is not finite");
    }
    const double slot = t.number(r, "t");
    if (slot < 1 || slot > cfg.horizon || slot != std::floor(slot)) fail(t, r, "t outside 1..T");
    const bool first_of_episode = r == 0 || t.number(r - 1, "episode") != t.number(r, "episode");
    if (first_of_episode ? slot != 1.0 : slot != t.number(r - 1, "t") + 1.0) {
      fail(t, r, "slots must run 1, 2, ... within an episode");
    }
    const double x = t.number(r, "x");
    const double y = t.number(r, "y");
    if (x < -tol || x > cfg.area_x + tol || y < -tol || y > cfg.area_y + tol) fail(t, r, "position outside the area");
    const double speed = std::hypot(t.number(r, "vx"), t.number(r, "vy"));
    if (speed > cfg.v_max * (1.0 + tol)) fail(t, r, "speed exceeds v_max");
    double sum = 0.0;
    for (int i = 1; i <= n; ++i) {
      const double b = t.number(r, "b" + std::to_string(i));
      if (b < 0.0 || b > 1.0 + tol) fail(t, r, "bandwidth ratio outside [0, 1]");
      sum += b;
    }
    if (std::abs(sum - 1.0) > 1e-6) fail(t, r, "bandwidth ratios do not sum to 1");
    if (t.number(r, "rate_mbps") < 0.0) fail(t, r, "rate_mbps must be >= 0");
    const double energy = t.number(r, "energy_j");
    const double expect = env::propulsion_power(speed) * cfg.dt;
    if (std::abs(energy - expect) > 1e-6 * expect) fail(t, r, "energy_j disagrees with the propulsion model");
    if (t.number(r, "queue") < 0.0) fail(t, r, "queue must be >= 0");
    const bool last_of_episode = r + 1 == t.rows.size() || t.number(r + 1, "episode") != t.number(r, "episode");
    if (last_of_episode) {
      if (slot != cfg.horizon) fail(t, r, "episode ends before t = T");
      if ((env::Vec2{x, y} - cfg.dest).norm() > cfg.v_max * cfg.dt) fail(t, r, "episode ends away from dest");
    }
  }
}

void validate_sweep(const Table& t) {
  expect_header(t, sweep_header());
  if (t.rows.empty()) throw FormatError(t.name + ": sweep has no rows");
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    for (std::size_t c = 1; c < t.header.size(); ++c) {
      if (!std::isfinite(t.number(r, t.header[c]))) fail(t, r, t.header[c] + " is not finite");
    }
    if (t.rows[r][0] != t.rows[0][0]) fail(t, r, "param differs between rows");
  }
}

}  // namespace lyapgdm::csv
