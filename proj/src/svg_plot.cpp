#include "lyapgdm/svg_plot.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "lyapgdm/config.hpp"
#include "lyapgdm/csv.hpp"
#include "lyapgdm/errors.hpp"

namespace lyapgdm::plot {

namespace {

constexpr std::array<const char*, 6> kPalette{"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"};
constexpr double kWidth = 760.0;
constexpr double kHeight = 460.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 190.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 55.0;

std::string num(double v, int precision = 6) {
  if (std::abs(v) < 1e-12) v = 0.0;
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::general, precision);
  return std::string(buf.data(), ptr);
}

std::string px(double v) { return num(std::round(v * 100.0) / 100.0, 8); }

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::vector<double> nice_ticks(double lo, double hi) {
  const double span = hi - lo;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  }
  std::vector<double> ticks;
  for (double t = std::ceil(lo / step - 1e-9) * step; t <= hi + 1e-9 * step; t += step) ticks.push_back(t);
  return ticks;
}

std::pair<double, double> padded_range(double lo, double hi) {
  if (!(hi > lo)) {
    const double pad = std::max(std::abs(lo) * 0.05, 1.0);
    return {lo - pad, hi + pad};
  }
  const double pad = (hi - lo) * 0.05;
  return {lo - pad, hi + pad};
}

std::string label_for(const csv::Table& t, const std::string& path, const char* footer_key) {
  if (auto v = t.footer(footer_key)) return *v;
  return std::filesystem::path(path).stem().string();
}

}  // namespace

PlotKind plot_kind_from_string(std::string_view s) {
  for (PlotKind k : {PlotKind::training_curve, PlotKind::rate_vs_bandwidth, PlotKind::energy_vs_time}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("plot kind: unknown '" + std::string(s) +
                    "' (expected training-curve, rate-vs-bandwidth or energy-vs-time)");
}

std::string to_string(PlotKind k) {
  switch (k) {
    case PlotKind::training_curve: return "training-curve";
    case PlotKind::rate_vs_bandwidth: return "rate-vs-bandwidth";
    case PlotKind::energy_vs_time: return "energy-vs-time";
  }
  return "?";
}

std::vector<double> trailing_mean(const std::vector<double>& v, int window) {
  if (window < 1) throw ConfigError("smoothing window must be >= 1");
  std::vector<double> out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    sum += v[i];
    if (i >= static_cast<std::size_t>(window)) sum -= v[i - window];
    out[i] = sum / static_cast<double>(std::min<std::size_t>(i + 1, window));
  }
  return out;
}

std::string render_svg(const Chart& chart) {
  double x_lo = std::numeric_limits<double>::infinity();
  double x_hi = -x_lo;
  double y_lo = x_lo;
  double y_hi = -x_lo;
  for (const Series& s : chart.series) {
    for (double x : s.x) x_lo = std::min(x_lo, x), x_hi = std::max(x_hi, x);
    for (double y : s.y) y_lo = std::min(y_lo, y), y_hi = std::max(y_hi, y);
  }
  if (chart.reference_y) y_lo = std::min(y_lo, *chart.reference_y), y_hi = std::max(y_hi, *chart.reference_y);
  if (!std::isfinite(x_lo)) x_lo = 0.0, x_hi = 1.0;
  if (!std::isfinite(y_lo)) y_lo = 0.0, y_hi = 1.0;
  std::tie(x_lo, x_hi) = padded_range(x_lo, x_hi);
  std::tie(y_lo, y_hi) = padded_range(y_lo, y_hi);

  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (x - x_lo) / (x_hi - x_lo) * plot_w; };
  auto sy = [&](double y) { return kTop + (y_hi - y) / (y_hi - y_lo) * plot_h; };

  std::string o;
  o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + px(kWidth) + "\" height=\"" + px(kHeight) +
       "\" viewBox=\"0 0 " + px(kWidth) + " " + px(kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o += "<rect x=\"0\" y=\"0\" width=\"" + px(kWidth) + "\" height=\"" + px(kHeight) + "\" fill=\"white\"/>\n";
  o += "<text x=\"" + px(kLeft + plot_w / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
       escape(chart.title) + "</text>\n";

  o += "<g stroke=\"#dddddd\" stroke-width=\"1\">\n";
  const auto xt = nice_ticks(x_lo, x_hi);
  const auto yt = nice_ticks(y_lo, y_hi);
  for (double t : xt) o += "<line x1=\"" + px(sx(t)) + "\" y1=\"" + px(kTop) + "\" x2=\"" + px(sx(t)) + "\" y2=\"" + px(kTop + plot_h) + "\"/>\n";
  for (double t : yt) o += "<line x1=\"" + px(kLeft) + "\" y1=\"" + px(sy(t)) + "\" x2=\"" + px(kLeft + plot_w) + "\" y2=\"" + px(sy(t)) + "\"/>\n";
  o += "</g>\n";
  o += "<rect x=\"" + px(kLeft) + "\" y=\"" + px(kTop) + "\" width=\"" + px(plot_w) + "\" height=\"" + px(plot_h) +
       "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double t : xt) {
    o += "<text x=\"" + px(sx(t)) + "\" y=\"" + px(kTop + plot_h + 16) + "\" text-anchor=\"middle\">" + num(t) + "</text>\n";
  }
  for (double t : yt) {
    o += "<text x=\"" + px(kLeft - 6) + "\" y=\"" + px(sy(t) + 4) + "\" text-anchor=\"end\">" + num(t) + "</text>\n";
  }
  o += "<text x=\"" + px(kLeft + plot_w / 2) + "\" y=\"" + px(kHeight - 14) + "\" text-anchor=\"middle\">" +
       escape(chart.x_label) + "</text>\n";
  o += "<text x=\"16\" y=\"" + px(kTop + plot_h / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
       px(kTop + plot_h / 2) + ")\">" + escape(chart.y_label) + "</text>\n";

  for (const Series& s : chart.series) {
    const char* color = kPalette[static_cast<std::size_t>(s.color) % kPalette.size()];
    std::string pts;
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (i) pts += ' ';
      pts += px(sx(s.x[i])) + "," + px(sy(s.y[i]));
    }
    o += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"" + (s.faint ? "1" : "2") + "\"" +
         (s.faint ? " stroke-opacity=\"0.35\"" : "") + " points=\"" + pts + "\"/>\n";
    if (s.markers) {
      for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
        o += "<circle cx=\"" + px(sx(s.x[i])) + "\" cy=\"" + px(sy(s.y[i])) + "\" r=\"3.5\" fill=\"" + color + "\"/>\n";
      }
    }
  }
  if (chart.reference_y) {
    const double y = sy(*chart.reference_y);
    o += "<line x1=\"" + px(kLeft) + "\" y1=\"" + px(y) + "\" x2=\"" + px(kLeft + plot_w) + "\" y2=\"" + px(y) +
         "\" stroke=\"black\" stroke-width=\"1.5\" stroke-dasharray=\"6,4\"/>\n";
  }

  double ly = kTop + 8;
  const double lx = kLeft + plot_w + 14;
  for (const Series& s : chart.series) {
    if (s.faint) continue;
    const char* color = kPalette[static_cast<std::size_t>(s.color) % kPalette.size()];
    o += "<line x1=\"" + px(lx) + "\" y1=\"" + px(ly) + "\" x2=\"" + px(lx + 22) + "\" y2=\"" + px(ly) +
         "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    o += "<text x=\"" + px(lx + 28) + "\" y=\"" + px(ly + 4) + "\">" + escape(s.label) + "</text>\n";
    ly += 18;
  }
  if (chart.reference_y) {
    o += "<line x1=\"" + px(lx) + "\" y1=\"" + px(ly) + "\" x2=\"" + px(lx + 22) + "\" y2=\"" + px(ly) +
         "\" stroke=\"black\" stroke-width=\"1.5\" stroke-dasharray=\"6,4\"/>\n";
    o += "<text x=\"" + px(lx + 28) + "\" y=\"" + px(ly + 4) + "\">" + escape(chart.reference_label) + "</text>\n";
  }
  o += "</svg>\n";
  return o;
}

Chart build_chart(PlotKind kind, const std::vector<std::string>& csv_paths) {
  if (csv_paths.empty()) throw ConfigError("plot: no input CSV files");
  Chart chart;
  int color = 0;
  switch (kind) {
    case PlotKind::training_curve: {
      chart.title = "Training curve";
      chart.x_label = "Episode";
      chart.y_label = "Average reward per slot";
      for (const std::string& path : csv_paths) {
        const csv::Table t = csv::read_table(path);
        csv::validate_metrics(t);
        Series raw;
        raw.label = label_for(t, path, "agent");
        raw.color = color;
        raw.faint = true;
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
          raw.x.push_back(t.number(r, "episode"));
          raw.y.push_back(t.number(r, "reward_mean"));
        }
        Series smooth = raw;
        smooth.faint = false;
        smooth.y = trailing_mean(raw.y, kTrainingSmoothWindow);
        smooth.label = raw.label + " (" + std::to_string(kTrainingSmoothWindow) + "-ep mean)";
        chart.series.push_back(std::move(raw));
        chart.series.push_back(std::move(smooth));
        ++color;
      }
      break;
    }
    case PlotKind::rate_vs_bandwidth: {
      chart.title = "Average transmission rate versus bandwidth";
      chart.x_label = "Bandwidth (MHz)";
      chart.y_label = "Average sum rate (Mbps)";
      for (const std::string& path : csv_paths) {
        const csv::Table t = csv::read_table(path);
        csv::validate_sweep(t);
        if (t.rows[0][0] != "env.bandwidth") {
          throw FormatError(path + ": rate-vs-bandwidth needs a sweep over env.bandwidth, found " + t.rows[0][0]);
        }
        Series s;
        s.label = label_for(t, path, "policy");
        s.color = color++;
        s.markers = true;
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
          s.x.push_back(t.number(r, "value") / 1e6);
          s.y.push_back(t.number(r, "rate_mean_mbps"));
        }
        chart.series.push_back(std::move(s));
      }
      break;
    }
    case PlotKind::energy_vs_time: {
      chart.title = "UAV propulsion energy versus time";
      chart.x_label = "Time slot";
      chart.y_label = "Energy (J), running mean";
      double budget = 140.0;
      for (const std::string& path : csv_paths) {
        const csv::Table t = csv::read_table(path);
        if (t.header.size() < 11 || t.header[0] != "episode" || t.header[1] != "t") {
          throw FormatError(path + " line 1: not an evaluation trace");
        }
        if (auto b = t.footer("energy_budget_j")) budget = config::parse_double(*b, "energy_budget_j");
        std::vector<double> sum;
        std::vector<int> count;
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
          const double slot = t.number(r, "t");
          if (slot < 1 || slot != std::floor(slot)) throw FormatError(path + " line " + std::to_string(t.row_lines[r]) + ": bad t");
          const auto idx = static_cast<std::size_t>(slot) - 1;
          if (idx >= sum.size()) sum.resize(idx + 1, 0.0), count.resize(idx + 1, 0);
          sum[idx] += t.number(r, "energy_j");
          ++count[idx];
        }
        Series per_slot;
        per_slot.label = label_for(t, path, "policy");
        per_slot.color = color;
        per_slot.faint = true;
        double running = 0.0;
        Series avg = per_slot;
        avg.faint = false;
        for (std::size_t i = 0; i < sum.size(); ++i) {
          if (count[i] == 0) continue;
          const double mean = sum[i] / count[i];
          running += mean;
          per_slot.x.push_back(static_cast<double>(i + 1));
          per_slot.y.push_back(mean);
          avg.x.push_back(static_cast<double>(i + 1));
          avg.y.push_back(running / static_cast<double>(avg.x.size()));
        }
        chart.series.push_back(std::move(per_slot));
        chart.series.push_back(std::move(avg));
        ++color;
      }
      chart.reference_y = budget;
      chart.reference_label = "budget " + num(budget) + " J";
      break;
    }
  }
  return chart;
}

void emit_plot(PlotKind kind, const std::vector<std::string>& csv_paths, const std::string& out_path) {
  const std::string svg = render_svg(build_chart(kind, csv_paths));
  const std::filesystem::path p(out_path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + out_path + "'");
  out << svg;
}

}  // namespace lyapgdm::plot
