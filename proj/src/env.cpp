#include "lyapgdm/env.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "lyapgdm/errors.hpp"

namespace lyapgdm::env {

namespace {

// Rotary-wing constants: blade profile power, induced hover power, rotor tip
// speed, mean induced velocity in hover, fuselage drag ratio, air density,
// rotor solidity, rotor disc area.
constexpr double kBladeProfilePower = 79.8563;
constexpr double kInducedPower = 88.6279;
constexpr double kTipSpeed = 120.0;
constexpr double kHoverInducedVelocity = 4.03;
constexpr double kFuselageDragRatio = 0.6;
constexpr double kAirDensity = 1.225;
constexpr double kRotorSolidity = 0.05;
constexpr double kRotorDiscArea = 0.503;

bool inside(Vec2 p, const EnvConfig& cfg) {
  return p.x >= 0.0 && p.x <= cfg.area_x && p.y >= 0.0 && p.y <= cfg.area_y;
}

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key + ": " + what);
}

bool finite_positive(double v) { return std::isfinite(v) && v > 0.0; }

}  // namespace

void EnvConfig::validate() const {
  require(finite_positive(area_x), "env.area_x", "must be > 0");
  require(finite_positive(area_y), "env.area_y", "must be > 0");
  require(finite_positive(altitude), "env.altitude", "must be > 0");
  require(finite_positive(v_max), "env.v_max", "must be > 0");
  require(horizon >= 1, "env.horizon", "must be >= 1");
  require(finite_positive(dt), "env.dt", "must be > 0");
  require(finite_positive(bandwidth), "env.bandwidth", "must be > 0");
  require(finite_positive(tx_power), "env.tx_power", "must be > 0");
  require(finite_positive(energy_budget), "env.energy_budget", "must be > 0");
  require(finite_positive(beta0), "env.beta0", "must be > 0");
  require(finite_positive(noise_psd), "env.noise_psd", "must be > 0");
  require(std::isfinite(v_weight) && v_weight >= 0.0, "env.v_weight", "must be >= 0");
  require(inside(start, *this), "env.start", "must lie inside the area");
  require(inside(dest, *this), "env.dest", "must lie inside the area");
  require(!device_positions.empty(), "env.device_positions", "need at least one device");
  for (const Vec2& d : device_positions) {
    require(inside(d, *this), "env.device_positions", "every device must lie inside the area");
  }
  require((dest - start).norm() <= horizon * dt * v_max, "env.dest",
          "unreachable from env.start within horizon * dt * v_max");
}

void EnvConfig::materialize_devices() {
  if (device_layout != DeviceLayout::random) return;
  if (device_count < 1) throw ConfigError("env.device_count: must be >= 1");
  std::mt19937_64 rng(device_seed);
  std::uniform_real_distribution<double> ux(0.0, area_x);
  std::uniform_real_distribution<double> uy(0.0, area_y);
  device_positions.clear();
  for (int i = 0; i < device_count; ++i) {
    const double x = ux(rng);
    const double y = uy(rng);
    device_positions.push_back({x, y});
  }
}

void check_action(const Action& a, const EnvConfig& cfg) {
  if (!std::isfinite(a.velocity.x) || !std::isfinite(a.velocity.y) ||
      a.velocity.norm() > cfg.v_max * (1.0 + 1e-12)) {
    throw DomainError("action velocity must be finite with norm <= v_max");
  }
  if (static_cast<int>(a.bandwidth_ratios.size()) != cfg.num_devices()) {
    throw DomainError("action needs one bandwidth ratio per device");
  }
  double sum = 0.0;
  for (double r : a.bandwidth_ratios) {
    if (!(r >= 0.0)) throw DomainError("bandwidth ratios must be >= 0");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw DomainError("bandwidth ratios must sum to 1");
}

double channel_gain(Vec2 uav, Vec2 device, const EnvConfig& cfg) {
  return cfg.beta0 / ((uav - device).norm_sq() + cfg.altitude * cfg.altitude);
}

std::vector<double> uplink_rates(Vec2 uav, const EnvConfig& cfg, std::span<const double> ratios) {
  if (static_cast<int>(ratios.size()) != cfg.num_devices()) {
    throw UsageError("uplink_rates: ratio count does not match device count");
  }
  std::vector<double> rates(ratios.size(), 0.0);
  for (std::size_t n = 0; n < ratios.size(); ++n) {
    const double b = ratios[n] * cfg.bandwidth;
    if (b <= 0.0) continue;
    const double g = channel_gain(uav, cfg.device_positions[n], cfg);
    rates[n] = b * std::log2(1.0 + cfg.tx_power * g / (b * cfg.noise_psd));
  }
  return rates;
}

double propulsion_power(double speed) {
  if (!std::isfinite(speed) || speed < 0.0) {
    throw DomainError("propulsion_power: speed must be finite and >= 0");
  }
  const double v2 = speed * speed;
  const double v0_2 = kHoverInducedVelocity * kHoverInducedVelocity;
  const double blade = kBladeProfilePower * (1.0 + 3.0 * v2 / (kTipSpeed * kTipSpeed));
  const double induced =
      kInducedPower * std::sqrt(std::sqrt(1.0 + v2 * v2 / (4.0 * v0_2 * v0_2)) - v2 / (2.0 * v0_2));
  const double parasite =
      0.5 * kFuselageDragRatio * kAirDensity * kRotorSolidity * kRotorDiscArea * v2 * speed;
  return blade + induced + parasite;
}

Action squash_raw_action(std::span<const double> raw, const EnvConfig& cfg) {
  const int n = cfg.num_devices();
  if (static_cast<int>(raw.size()) != n + 2) {
    throw UsageError("squash_raw_action: raw action length must be 2 + device count");
  }
  Action a;
  a.velocity = Vec2{std::tanh(raw[0]), std::tanh(raw[1])} * cfg.v_max;
  const double speed = a.velocity.norm();
  if (speed > cfg.v_max) a.velocity = a.velocity * (cfg.v_max / speed);

  const auto logits = raw.subspan(2);
  const double top = *std::max_element(logits.begin(), logits.end());
  a.bandwidth_ratios.resize(n);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    a.bandwidth_ratios[i] = std::exp(logits[i] - top);
    total += a.bandwidth_ratios[i];
  }
  for (double& r : a.bandwidth_ratios) r /= total;
  return a;
}

Vec2 reachability_clamp(Vec2 pos, Vec2 velocity, int t, const EnvConfig& cfg) {
  const double slack = (cfg.horizon - t - 1) * cfg.v_max * cfg.dt;
  if ((pos + velocity * cfg.dt - cfg.dest).norm() <= slack) return velocity;
  const Vec2 to_dest = cfg.dest - pos;
  const double dist = to_dest.norm();
  if (dist == 0.0) return {};
  const double speed = std::min(cfg.v_max, dist / cfg.dt);
  return to_dest * (speed / dist);
}

Vec2 clip_to_area(Vec2 p, const EnvConfig& cfg) {
  return {std::clamp(p.x, 0.0, cfg.area_x), std::clamp(p.y, 0.0, cfg.area_y)};
}

double normalized_log_gain(double gain) {
  return std::clamp((std::log10(gain) + 10.0) / 2.0, -1.0, 1.0);
}

Observation build_observation(const EnvState& state, const EnvConfig& cfg) {
  Observation obs;
  obs.reserve(cfg.obs_dim());
  obs.push_back(state.position.x / cfg.area_x);
  obs.push_back(state.position.y / cfg.area_y);
  obs.push_back(static_cast<double>(state.t) / cfg.horizon);
  obs.push_back(state.queue.queue(0));
  for (const Vec2& d : cfg.device_positions) {
    obs.push_back(normalized_log_gain(channel_gain(state.position, d, cfg)));
  }
  obs.push_back((cfg.dest - state.position).norm() / cfg.diagonal());
  return obs;
}

ResetResult reset(const EnvConfig& cfg) {
  cfg.validate();
  ResetResult r;
  r.state.position = cfg.start;
  r.state.t = 0;
  r.state.queue = lyapunov::VirtualQueueBank(std::vector<double>{cfg.energy_budget});
  r.state.done = false;
  r.obs = build_observation(r.state, cfg);
  return r;
}

SlotInfo evaluate_slot(const EnvState& state, const Action& action, const EnvConfig& cfg) {
  if (state.done) throw UsageError("step called on a finished episode");
  check_action(action, cfg);
  const Vec2 commanded = reachability_clamp(state.position, action.velocity, state.t, cfg);
  const Vec2 next = clip_to_area(state.position + commanded * cfg.dt, cfg);

  SlotInfo info;
  info.t = state.t + 1;
  info.position = next;
  info.velocity = (next - state.position) * (1.0 / cfg.dt);
  info.ratios = action.bandwidth_ratios;
  info.rates_bps = uplink_rates(next, cfg, action.bandwidth_ratios);
  info.sum_rate_mbps = std::accumulate(info.rates_bps.begin(), info.rates_bps.end(), 0.0) / 1e6;
  info.energy_j = propulsion_power(info.velocity.norm()) * cfg.dt;

  lyapunov::VirtualQueueBank queue = state.queue;
  const double consumed[] = {info.energy_j};
  queue.update(consumed);
  info.queue = queue.queue(0);
  info.drift = lyapunov::lyapunov_drift(lyapunov::lyapunov_value(queue),
                                        lyapunov::lyapunov_value(state.queue));
  info.penalty = -info.sum_rate_mbps;
  info.dpp = lyapunov::drift_plus_penalty(info.drift, info.penalty, {cfg.v_weight});
  info.reward = lyapunov::reward_from_dpp(info.dpp);
  return info;
}

StepResult step_action(const EnvState& state, const Action& action, const EnvConfig& cfg) {
  StepResult r;
  r.info = evaluate_slot(state, action, cfg);
  r.state.position = r.info.position;
  r.state.t = r.info.t;
  r.state.queue = lyapunov::VirtualQueueBank({r.info.queue}, {cfg.energy_budget});
  r.state.done = r.state.t == cfg.horizon;
  r.obs = build_observation(r.state, cfg);
  r.reward = r.info.reward;
  r.done = r.state.done;
  return r;
}

StepResult step(const EnvState& state, std::span<const double> raw_action, const EnvConfig& cfg) {
  if (state.done) throw UsageError("step called on a finished episode");
  for (double v : raw_action) {
    if (!std::isfinite(v)) throw DomainError("step: raw action must be finite");
  }
  return step_action(state, squash_raw_action(raw_action, cfg), cfg);
}

}  // namespace lyapgdm::env
