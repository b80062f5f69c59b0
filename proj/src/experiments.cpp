#include "lyapgdm/experiments.hpp"

#include <cstdio>
#include <fstream>
#include <random>

#include <json.hpp>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "lyapgdm/baselines.hpp"
#include "lyapgdm/csv.hpp"
#include "lyapgdm/errors.hpp"
#include "lyapgdm/param_io.hpp"

namespace lyapgdm::experiments {

namespace fs = std::filesystem;
using config::format_double;
using config::PolicyKind;
using config::RunConfig;
using Json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kEvalStream = 4;

std::mt19937_64 eval_stream(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(kEvalStream)};
  return std::mt19937_64(seq);
}

rl::AgentKind agent_kind(PolicyKind k) {
  if (k == PolicyKind::gdm_ddpg) return rl::AgentKind::gdm_ddpg;
  if (k == PolicyKind::mlp_ddpg) return rl::AgentKind::mlp_ddpg;
  throw ConfigError("experiment.agent: '" + config::to_string(k) + "' is not a learned agent");
}

env::EnvConfig materialized_env(const RunConfig& cfg) {
  env::EnvConfig e = cfg.env;
  e.materialize_devices();
  e.validate();
  return e;
}

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

fs::path checkpoint_dir(const RunConfig& cfg) {
  if (!cfg.experiment.checkpoint.empty()) return cfg.experiment.checkpoint;
  return fs::path(cfg.experiment.out) / "checkpoints" / "final";
}

}  // namespace

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
}

void save_checkpoint(const fs::path& dir, const rl::AgentNets<rl::Real>& nets, const RunConfig& cfg,
                     int episodes_done) {
  fs::create_directories(dir);
  const std::uint64_t seed = cfg.trainer.seed;
  nn::save_params(dir / "actor.bin", nets.actor.params, nets.actor.spec, seed);
  nn::save_params(dir / "target_actor.bin", nets.target_actor.params, nets.target_actor.spec, seed);
  nn::save_params(dir / "critic.bin", nets.critic, nets.critic_spec, seed);
  nn::save_params(dir / "target_critic.bin", nets.target_critic, nets.critic_spec, seed);

  Json m;
  m["format"] = 1;
  m["agent"] = std::string(rl::to_string(nets.actor.kind));
  m["episodes"] = episodes_done;
  m["seed"] = seed;
  m["obs_dim"] = nets.actor.kind == rl::AgentKind::gdm_ddpg ? nets.actor.layout.obs_dim
                                                            : nets.actor.spec.input_width();
  m["action_dim"] = nets.actor.spec.output_width();
  if (nets.actor.kind == rl::AgentKind::gdm_ddpg) {
    m["diffusion"] = {{"steps", cfg.diffusion.steps},
                      {"beta_min", cfg.diffusion.beta_min},
                      {"beta_max", cfg.diffusion.beta_max},
                      {"embed_dim", cfg.diffusion.embed_dim},
                      {"x0_clip", cfg.diffusion.x0_clip}};
  }
  m["files"] = {{"actor", "actor.bin"},
                {"target_actor", "target_actor.bin"},
                {"critic", "critic.bin"},
                {"target_critic", "target_critic.bin"}};
  std::ofstream out = open_out(dir / "manifest.json");
  out << m.dump(2) << "\n";
}

rl::PolicyNet<rl::Real> load_actor(const fs::path& dir, const RunConfig& cfg) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw ConfigError("experiment.checkpoint: no manifest.json in '" + dir.string() + "'");
  Json m;
  try {
    m = Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError("experiment.checkpoint: unreadable manifest '" + manifest_path.string() + "': " + e.what());
  }
  const rl::AgentKind kind = agent_kind(cfg.experiment.agent);
  if (m.value("agent", std::string()) != rl::to_string(kind)) {
    throw ConfigError("experiment.agent: checkpoint holds '" + m.value("agent", std::string()) +
                      "', requested '" + std::string(rl::to_string(kind)) + "'");
  }
  const env::EnvConfig e = materialized_env(cfg);
  if (m.value("obs_dim", -1) != e.obs_dim() || m.value("action_dim", -1) != e.action_dim()) {
    throw ConfigError("experiment.checkpoint: network dimensions do not match the environment");
  }

  rl::PolicyNet<rl::Real> p;
  p.kind = kind;
  nn::BlobHeader header;
  p.params = nn::load_params<rl::Real>(dir / m["files"].value("actor", "actor.bin"), &header);
  p.spec = header.spec;
  if (kind == rl::AgentKind::gdm_ddpg) {
    const Json& d = m.at("diffusion");
    p.schedule = diffusion::make_schedule(d.at("steps").get<int>(), d.at("beta_min").get<double>(),
                                          d.at("beta_max").get<double>());
    p.layout = {e.action_dim(), e.obs_dim(), d.at("embed_dim").get<int>(), d.at("x0_clip").get<double>()};
    p.layout.check(p.spec);
  } else if (p.spec.input_width() != e.obs_dim() || p.spec.output_width() != e.action_dim()) {
    throw ConfigError("experiment.checkpoint: actor shape does not match the environment");
  }
  return p;
}

EvalResult evaluate(const RunConfig& cfg, const rl::PolicyNet<rl::Real>* actor) {
  const env::EnvConfig ec = materialized_env(cfg);
  const PolicyKind kind = cfg.experiment.agent;
  if (config::is_learned(kind)) {
    if (actor == nullptr) throw UsageError("evaluate: learned agents need an actor");
    if (actor->kind != agent_kind(kind)) throw UsageError("evaluate: actor kind differs from experiment.agent");
  }
  std::mt19937_64 rng = eval_stream(cfg.experiment.eval_seed);
  const baselines::ActionGrid grid = baselines::default_grid(ec);

  EvalResult result;
  double rate = 0.0;
  double energy = 0.0;
  double reward = 0.0;
  double queue = 0.0;
  std::size_t slots = 0;
  for (int ep = 0; ep < cfg.experiment.eval_episodes; ++ep) {
    auto [state, obs] = env::reset(ec);
    std::vector<env::SlotInfo> trace;
    while (!state.done) {
      env::StepResult sr;
      switch (kind) {
        case PolicyKind::gdm_ddpg:
        case PolicyKind::mlp_ddpg: {
          nn::Mat<rl::Real> o(static_cast<Eigen::Index>(obs.size()), 1);
          for (std::size_t i = 0; i < obs.size(); ++i) o(static_cast<Eigen::Index>(i), 0) = static_cast<rl::Real>(obs[i]);
          const nn::Mat<rl::Real> a = rl::policy_act(*actor, o, rng, cfg.diffusion.eval_chain_noise);
          std::vector<double> raw(a.data(), a.data() + a.size());
          sr = env::step(state, raw, ec);
          break;
        }
        case PolicyKind::myopic:
          sr = env::step_action(state, baselines::myopic_grid_solve(state, ec, grid).action, ec);
          break;
        case PolicyKind::static_path:
          sr = env::step_action(state, baselines::static_policy_action(state, ec), ec);
          break;
        case PolicyKind::random:
          sr = env::step(state, baselines::random_action(rng, ec.action_dim()), ec);
          break;
      }
      rate += sr.info.sum_rate_mbps;
      energy += sr.info.energy_j;
      reward += sr.reward;
      ++slots;
      trace.push_back(std::move(sr.info));
      state = std::move(sr.state);
      obs = std::move(sr.obs);
    }
    queue += state.queue.queue(0);
    result.episodes.push_back(std::move(trace));
  }
  result.summary.rate_mean_mbps = rate / static_cast<double>(slots);
  result.summary.energy_mean_j = energy / static_cast<double>(slots);
  result.summary.reward_mean = reward / static_cast<double>(slots);
  result.summary.queue_final = queue / cfg.experiment.eval_episodes;
  return result;
}

std::vector<double> energy_moving_average(const EvalResult& r) {
  std::vector<double> per_t;
  std::vector<int> counts;
  for (const auto& ep : r.episodes) {
    for (std::size_t t = 0; t < ep.size(); ++t) {
      if (t >= per_t.size()) {
        per_t.push_back(0.0);
        counts.push_back(0);
      }
      per_t[t] += ep[t].energy_j;
      ++counts[t];
    }
  }
  std::vector<double> avg(per_t.size());
  double running = 0.0;
  for (std::size_t t = 0; t < per_t.size(); ++t) {
    running += per_t[t] / counts[t];
    avg[t] = running / static_cast<double>(t + 1);
  }
  return avg;
}

void write_trace(const fs::path& path, const EvalResult& r, const RunConfig& cfg) {
  const env::EnvConfig ec = materialized_env(cfg);
  std::ofstream out = open_out(path);
  out << csv::join_row(csv::trace_header(ec.num_devices())) << "\n";
  for (std::size_t ep = 0; ep < r.episodes.size(); ++ep) {
    for (const env::SlotInfo& s : r.episodes[ep]) out << csv::trace_row(static_cast<int>(ep), s) << "\n";
  }
  out << "# mean_rate_mbps=" << format_double(r.summary.rate_mean_mbps) << "\n";
  out << "# mean_energy_j=" << format_double(r.summary.energy_mean_j) << "\n";
  out << "# final_queue=" << format_double(r.summary.queue_final) << "\n";
  out << "# reward_mean=" << format_double(r.summary.reward_mean) << "\n";
  out << "# energy_budget_j=" << format_double(ec.energy_budget) << "\n";
  out << "# policy=" << config::to_string(cfg.experiment.agent) << "\n";
  out << "# episodes=" << r.episodes.size() << "\n";
}

rl::TrainResult run_train(const RunConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  const rl::AgentKind kind = agent_kind(cfg.experiment.agent);
  const env::EnvConfig ec = materialized_env(cfg);
  const fs::path out_dir = cfg.experiment.out;
  fs::create_directories(out_dir);
  {
    std::ofstream ini = open_out(out_dir / "config.ini");
    ini << config::serialize_config(cfg);
  }
  std::ofstream metrics = open_out(out_dir / "training.csv");
  metrics << csv::join_row(csv::metrics_header()) << "\n";

  const int every = cfg.experiment.checkpoint_every;
  rl::TrainResult result = rl::train_run(
      ec, cfg.trainer, cfg.diffusion, cfg.networks, kind,
      [&](const rl::EpisodeMetrics& m, const rl::AgentNets<rl::Real>& nets) {
        metrics << csv::metrics_row(m) << "\n";
        metrics.flush();
        const int done = m.episode + 1;
        if (every > 0 && done % every == 0) {
          char name[32];
          std::snprintf(name, sizeof name, "ep%04d", done);
          save_checkpoint(out_dir / "checkpoints" / name, nets, cfg, done);
        }
        if (progress) progress(m);
      });
  save_checkpoint(out_dir / "checkpoints" / "final", result.nets, cfg, cfg.trainer.episodes);
  metrics << "# agent=" << rl::to_string(kind) << "\n";
  metrics << "# seed=" << cfg.trainer.seed << "\n";
  metrics << "# total_updates=" << result.total_updates << "\n";
  if (!metrics) throw std::runtime_error("write failed for '" + (out_dir / "training.csv").string() + "'");
  return result;
}

EvalResult run_eval(const RunConfig& cfg) {
  cfg.validate();
  EvalResult r;
  if (config::is_learned(cfg.experiment.agent)) {
    const rl::PolicyNet<rl::Real> actor = load_actor(checkpoint_dir(cfg), cfg);
    r = evaluate(cfg, &actor);
  } else {
    r = evaluate(cfg);
  }
  write_trace(fs::path(cfg.experiment.out) / "trace.csv", r, cfg);
  return r;
}

std::vector<SweepRow> run_sweep(const RunConfig& cfg) {
  cfg.validate();
  const std::string& param = cfg.experiment.sweep_param;
  if (param.empty()) throw ConfigError("experiment.sweep_param: required for a sweep");
  if (cfg.experiment.sweep_values.empty()) throw ConfigError("experiment.sweep_values: must not be empty");
  const bool learned = config::is_learned(cfg.experiment.agent);
  const bool retrain = learned && cfg.experiment.sweep_mode == config::SweepMode::train;
  const fs::path out_dir = cfg.experiment.out;

  rl::PolicyNet<rl::Real> shared_actor;
  if (learned && !retrain) shared_actor = load_actor(checkpoint_dir(cfg), cfg);

  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < cfg.experiment.sweep_values.size(); ++i) {
    const double value = cfg.experiment.sweep_values[i];
    RunConfig c = cfg;
    config::set_value(c, param, format_double(value));
    c.experiment.out = (out_dir / ("value_" + std::to_string(i))).string();
    c.validate();
    EvalResult r;
    if (retrain) {
      const rl::TrainResult tr = run_train(c);
      r = evaluate(c, &tr.nets.actor);
    } else if (learned) {
      r = evaluate(c, &shared_actor);
    } else {
      r = evaluate(c);
    }
    write_trace(fs::path(c.experiment.out) / "trace.csv", r, c);
    rows.push_back({value, r.summary});
  }

  std::ofstream out = open_out(out_dir / "sweep.csv");
  out << csv::join_row(csv::sweep_header()) << "\n";
  for (const SweepRow& row : rows) {
    out << csv::join_row({param, format_double(row.value), format_double(row.summary.rate_mean_mbps),
                          format_double(row.summary.energy_mean_j), format_double(row.summary.queue_final),
                          format_double(row.summary.reward_mean)})
        << "\n";
  }
  out << "# policy=" << config::to_string(cfg.experiment.agent) << "\n";
  out << "# mode=" << (retrain ? "train" : "eval") << "\n";
  return rows;
}

}  // namespace lyapgdm::experiments
