#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "lyapgdm/config.hpp"
#include "lyapgdm/errors.hpp"
#include "lyapgdm/experiments.hpp"
#include "lyapgdm/svg_plot.hpp"

namespace {

using lyapgdm::ConfigError;
using lyapgdm::config::Override;
using lyapgdm::config::RunConfig;

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string agent;
  std::string out;
};

void add_common(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--config", f.config_path, "Run config file (key = value with [sections])");
  sub->add_option("--seed", f.seed, "Training seed; overrides the file, dotted overrides and LYAPGDM_SEED");
  sub->add_option("--agent", f.agent, "gdm-ddpg | mlp-ddpg | myopic | static | random");
  sub->add_option("--out", f.out, "Output directory");
  sub->allow_extras();
  sub->footer("Any config key can be overridden as --section.key VALUE or --section.key=VALUE.");
}

// Turns the leftover "--env.bandwidth 2e6" / "--env.bandwidth=2e6" tokens into overrides.
std::vector<Override> dotted_overrides(const std::vector<std::string>& extras) {
  std::vector<Override> out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& tok = extras[i];
    if (tok.rfind("--", 0) != 0 || tok.find('.') == std::string::npos) {
      throw ConfigError("unexpected argument '" + tok + "'");
    }
    std::string body = tok.substr(2);
    const std::size_t eq = body.find('=');
    if (eq != std::string::npos) {
      out.push_back({body.substr(0, eq), body.substr(eq + 1)});
    } else if (i + 1 < extras.size()) {
      out.push_back({body, extras[++i]});
    } else {
      throw ConfigError(body + ": missing value");
    }
  }
  return out;
}

RunConfig resolve(const CommonFlags& f, const CLI::App* sub, std::vector<Override> extra = {}) {
  std::vector<Override> overrides = dotted_overrides(sub->remaining());
  for (Override& o : extra) overrides.push_back(std::move(o));
  if (!f.agent.empty()) overrides.push_back({"experiment.agent", f.agent});
  if (!f.out.empty()) overrides.push_back({"experiment.out", f.out});
  std::optional<std::string> path;
  if (!f.config_path.empty()) path = f.config_path;
  return lyapgdm::config::resolve(path, overrides, f.seed, std::getenv("LYAPGDM_SEED"));
}

void print_summary(const lyapgdm::experiments::EvalSummary& s) {
  std::printf("mean_rate_mbps=%.6g mean_energy_j=%.6g final_queue=%.6g reward_mean=%.6g\n", s.rate_mean_mbps,
              s.energy_mean_j, s.queue_final, s.reward_mean);
}

}  // namespace

int main(int argc, char** argv) {
  lyapgdm::experiments::tune_allocator();
  CLI::App app{"Lyapunov-guided diffusion-policy UAV data collection: training, evaluation, sweeps and plots"};
  app.require_subcommand(1);

  CommonFlags train_f;
  CLI::App* train = app.add_subcommand("train", "Train a learned agent; writes training.csv and checkpoints");
  add_common(train, train_f);
  bool quiet = false;
  train->add_flag("--quiet", quiet, "Suppress per-episode progress");

  CommonFlags eval_f;
  std::string eval_checkpoint;
  CLI::App* eval = app.add_subcommand("eval", "Roll evaluation episodes; writes trace.csv");
  add_common(eval, eval_f);
  eval->add_option("--checkpoint", eval_checkpoint, "Checkpoint directory (default <out>/checkpoints/final)");

  CommonFlags sweep_f;
  std::string sweep_param;
  std::string sweep_values;
  std::string sweep_mode;
  std::string sweep_checkpoint;
  CLI::App* sweep = app.add_subcommand("sweep", "Evaluate or retrain across values of one config key");
  add_common(sweep, sweep_f);
  sweep->add_option("--param", sweep_param, "Config key to vary, e.g. env.bandwidth");
  sweep->add_option("--values", sweep_values, "Comma-separated values");
  sweep->add_option("--mode", sweep_mode, "eval | train");
  sweep->add_option("--checkpoint", sweep_checkpoint, "Checkpoint directory for eval mode");

  std::string plot_kind;
  std::string plot_out;
  std::vector<std::string> plot_inputs;
  CLI::App* plot = app.add_subcommand("plot", "Render CSV outputs as an SVG chart");
  plot->add_option("--kind", plot_kind, "training-curve | rate-vs-bandwidth | energy-vs-time")->required();
  plot->add_option("--out", plot_out, "Output SVG path")->required();
  plot->add_option("inputs", plot_inputs, "Input CSV files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (train->parsed()) {
      const RunConfig cfg = resolve(train_f, train);
      lyapgdm::experiments::run_train(cfg, [&](const lyapgdm::rl::EpisodeMetrics& m) {
        if (quiet) return;
        std::fprintf(stderr, "episode %d reward=%.4f rate=%.3f energy=%.2f queue=%.3f updates=%d %.0fms\n",
                     m.episode, m.reward_mean, m.rate_mean_mbps, m.energy_mean_j, m.queue_final, m.updates,
                     m.wall_ms);
      });
      std::printf("wrote %s/training.csv\n", cfg.experiment.out.c_str());
    } else if (eval->parsed()) {
      std::vector<Override> extra;
      if (!eval_checkpoint.empty()) extra.push_back({"experiment.checkpoint", eval_checkpoint});
      const RunConfig cfg = resolve(eval_f, eval, extra);
      print_summary(lyapgdm::experiments::run_eval(cfg).summary);
      std::printf("wrote %s/trace.csv\n", cfg.experiment.out.c_str());
    } else if (sweep->parsed()) {
      std::vector<Override> extra;
      if (!sweep_param.empty()) extra.push_back({"experiment.sweep_param", sweep_param});
      if (sweep->count("--values") > 0) extra.push_back({"experiment.sweep_values", sweep_values});
      if (!sweep_mode.empty()) extra.push_back({"experiment.sweep_mode", sweep_mode});
      if (!sweep_checkpoint.empty()) extra.push_back({"experiment.checkpoint", sweep_checkpoint});
      const RunConfig cfg = resolve(sweep_f, sweep, extra);
      for (const auto& row : lyapgdm::experiments::run_sweep(cfg)) {
        std::printf("%s=%s ", cfg.experiment.sweep_param.c_str(), lyapgdm::config::format_double(row.value).c_str());
        print_summary(row.summary);
      }
      std::printf("wrote %s/sweep.csv\n", cfg.experiment.out.c_str());
    } else if (plot->parsed()) {
      lyapgdm::plot::emit_plot(lyapgdm::plot::plot_kind_from_string(plot_kind), plot_inputs, plot_out);
      std::printf("wrote %s\n", plot_out.c_str());
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
