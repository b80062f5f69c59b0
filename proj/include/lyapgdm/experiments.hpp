#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "lyapgdm/config.hpp"
#include "lyapgdm/trainer.hpp"

namespace lyapgdm::experiments {

// Raises glibc's mmap and trim thresholds so the large per-update temporaries
// are recycled from the heap instead of being mapped and unmapped each time.
void tune_allocator();

// Writes actor/critic/target blobs plus manifest.json into `dir`.
void save_checkpoint(const std::filesystem::path& dir, const rl::AgentNets<rl::Real>& nets,
                     const config::RunConfig& cfg, int episodes_done);

// Rebuilds the online actor from a checkpoint directory. ConfigError when the
// directory is missing or its agent kind or dimensions disagree with `cfg`.
rl::PolicyNet<rl::Real> load_actor(const std::filesystem::path& dir, const config::RunConfig& cfg);

struct EvalSummary {
  double rate_mean_mbps = 0.0;  // mean over all slots of all episodes
  double energy_mean_j = 0.0;
  double queue_final = 0.0;     // mean final queue over episodes
  double reward_mean = 0.0;
};

struct EvalResult {
  std::vector<std::vector<env::SlotInfo>> episodes;
  EvalSummary summary;
};

// Rolls experiment.eval_episodes episodes with experiment.agent. Learned
// agents need `actor`; the rest ignore it. Exploration noise is off; the
// diffusion actor keeps its chain noise when diffusion.eval_chain_noise is set.
// All randomness comes from experiment.eval_seed.
EvalResult evaluate(const config::RunConfig& cfg, const rl::PolicyNet<rl::Real>* actor = nullptr);

// Per-slot mean energy across episodes, then its running mean over t.
std::vector<double> energy_moving_average(const EvalResult& r);

// Writes the per-slot trace with its summary footer.
void write_trace(const std::filesystem::path& path, const EvalResult& r, const config::RunConfig& cfg);

using ProgressFn = std::function<void(const rl::EpisodeMetrics&)>;

// Trains experiment.agent (a learned kind) and writes <out>/config.ini,
// <out>/training.csv and <out>/checkpoints/{epNNNN,final}/.
rl::TrainResult run_train(const config::RunConfig& cfg, const ProgressFn& progress = {});

// Evaluates experiment.agent, loading the checkpoint for learned kinds, and
// writes <out>/trace.csv.
EvalResult run_eval(const config::RunConfig& cfg);

struct SweepRow {
  double value = 0.0;
  EvalSummary summary;
};

// One summary row per experiment.sweep_values entry, written to
// <out>/sweep.csv; per-value artefacts go under <out>/value_<i>/. In train
// mode learned agents are retrained for every value.
std::vector<SweepRow> run_sweep(const config::RunConfig& cfg);

}  // namespace lyapgdm::experiments
