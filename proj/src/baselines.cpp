#include "lyapgdm/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "lyapgdm/errors.hpp"

namespace lyapgdm::baselines {

env::Action ActionGrid::at(std::size_t index) const {
  const std::size_t n_split = bandwidth_splits.size();
  const std::size_t n_speed = speeds.size();
  const std::size_t split = index % n_split;
  const std::size_t speed = (index / n_split) % n_speed;
  const std::size_t heading = index / (n_split * n_speed);
  env::Action a;
  a.velocity = headings.at(heading) * speeds[speed];
  a.bandwidth_ratios = bandwidth_splits[split];
  return a;
}

void ActionGrid::validate(const env::EnvConfig& cfg) const {
  if (size() == 0) throw ConfigError("action grid is empty");
  for (const env::Vec2& h : headings) {
    const double n = h.norm();
    if (n != 0.0 && std::abs(n - 1.0) > 1e-12) throw ConfigError("grid headings must be unit or zero");
  }
  for (double s : speeds) {
    if (!(s >= 0.0) || s > cfg.v_max) throw ConfigError("grid speeds must lie in [0, v_max]");
  }
  for (const auto& split : bandwidth_splits) {
    if (static_cast<int>(split.size()) != cfg.num_devices()) {
      throw ConfigError("grid split length must equal the device count");
    }
    double sum = 0.0;
    for (double r : split) {
      if (r < 0.0) throw ConfigError("grid split ratios must be >= 0");
      sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("grid split ratios must sum to 1");
  }
}

ActionGrid default_grid(const env::EnvConfig& cfg) {
  ActionGrid g;
  const double d = std::sqrt(0.5);
  g.headings = {{0.0, 0.0}, {1.0, 0.0}, {d, d},  {0.0, 1.0}, {-d, d},
                {-1.0, 0.0}, {-d, -d},  {0.0, -1.0}, {d, -d}};
  for (double s : {0.0, 10.0, 20.0, 25.0}) {
    if (s <= cfg.v_max) g.speeds.push_back(s);
  }
  const int n = cfg.num_devices();
  for (int i = 0; i < n; ++i) {
    std::vector<double> one_hot(n, 0.0);
    one_hot[i] = 1.0;
    g.bandwidth_splits.push_back(std::move(one_hot));
  }
  g.bandwidth_splits.emplace_back(n, 1.0 / n);
  return g;
}

GridChoice myopic_grid_solve(const env::EnvState& state, const env::EnvConfig& cfg,
                             const ActionGrid& grid) {
  if (grid.size() == 0) throw ConfigError("myopic_grid_solve: empty action grid");
  if (state.done) throw UsageError("myopic_grid_solve: episode already finished");
  GridChoice best;
  bool have = false;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    env::Action a = grid.at(i);
    const double dpp = env::evaluate_slot(state, a, cfg).dpp;
    if (!have || dpp < best.dpp) {
      best = {std::move(a), i, dpp};
      have = true;
    }
  }
  return best;
}

std::vector<float> mlp_actor_action(std::span<const double> obs, const nn::ParamTensor<float>& params,
                                    const nn::MlpSpec& spec) {
  if (static_cast<int>(obs.size()) != spec.input_width()) {
    throw ConfigError("mlp actor input width " + std::to_string(spec.input_width()) +
                      " != observation length " + std::to_string(obs.size()));
  }
  std::vector<float> x(obs.begin(), obs.end());
  return nn::mlp_forward(params, spec, std::span<const float>(x)).output;
}

std::vector<double> random_action(std::mt19937_64& rng, int action_dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> raw(action_dim);
  for (double& r : raw) r = normal(rng);
  return raw;
}

env::Action static_policy_action(const env::EnvState& state, const env::EnvConfig& cfg) {
  if (state.done) throw UsageError("static_policy_action: episode already finished");
  env::Action a;
  const env::Vec2 to_dest = cfg.dest - state.position;
  const double dist = to_dest.norm();
  if (dist > 0.0) {
    const double speed = std::min({kStaticCruiseSpeed, cfg.v_max, dist / cfg.dt});
    a.velocity = to_dest * (speed / dist);
  }
  a.bandwidth_ratios.assign(cfg.num_devices(), 1.0 / cfg.num_devices());
  return a;
}

}  // namespace lyapgdm::baselines
