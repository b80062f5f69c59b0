#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lyapgdm::plot {

enum class PlotKind { training_curve, rate_vs_bandwidth, energy_vs_time };

PlotKind plot_kind_from_string(std::string_view s);  // ConfigError on unknown kinds
std::string to_string(PlotKind k);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  int color = 0;         // palette index
  bool faint = false;    // drawn thin and translucent
  bool markers = false;
};

struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  std::optional<double> reference_y;
  std::string reference_label;
};

// Mean over the trailing `window` points (fewer at the start).
std::vector<double> trailing_mean(const std::vector<double>& v, int window);

// Self-contained SVG with axes, ticks and a legend. Output depends only on the chart.
std::string render_svg(const Chart& chart);

// Reads CSVs of the schema matching `kind` and assembles the chart. One input
// file contributes one legend entry; training curves also get a 50-episode
// trailing mean. FormatError on malformed input.
Chart build_chart(PlotKind kind, const std::vector<std::string>& csv_paths);

void emit_plot(PlotKind kind, const std::vector<std::string>& csv_paths, const std::string& out_path);

inline constexpr int kTrainingSmoothWindow = 50;

}  // namespace lyapgdm::plot
