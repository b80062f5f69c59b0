#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lyapgdm/lyapunov.hpp"

namespace lyapgdm::env {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double norm() const { return std::hypot(x, y); }
  double norm_sq() const { return x * x + y * y; }
  bool operator==(const Vec2&) const = default;
};

enum class DeviceLayout { fixed, random };

struct EnvConfig {
  double area_x = 600.0;
  double area_y = 450.0;
  Vec2 start{0.0, 0.0};
  Vec2 dest{600.0, 0.0};
  double altitude = 100.0;
  double v_max = 25.0;
  int horizon = 100;
  double dt = 1.0;
  double bandwidth = 1e6;
  double tx_power = 0.1;
  double energy_budget = 140.0;
  std::vector<Vec2> device_positions{{100.0, 150.0}, {300.0, 350.0}, {500.0, 100.0}};
  DeviceLayout device_layout = DeviceLayout::fixed;
  int device_count = 3;           // used by the random layout
  std::uint64_t device_seed = 0;  // used by the random layout
  double beta0 = 1e-5;
  double noise_psd = 1e-20;
  double v_weight = 0.5;

  // Throws ConfigError naming the first offending key. Call after
  // materialize_devices() when using the random layout.
  void validate() const;
  // Draws device positions for the random layout; no-op for fixed.
  void materialize_devices();

  int num_devices() const { return static_cast<int>(device_positions.size()); }
  int obs_dim() const { return num_devices() + 5; }
  int action_dim() const { return num_devices() + 2; }
  double diagonal() const { return std::hypot(area_x, area_y); }

  bool operator==(const EnvConfig&) const = default;
};

struct Action {
  Vec2 velocity;
  std::vector<double> bandwidth_ratios;
};

using Observation = std::vector<double>;

struct EnvState {
  Vec2 position;
  int t = 0;
  lyapunov::VirtualQueueBank queue{std::vector<double>{140.0}};
  bool done = false;
};

// Everything that happened in one slot; feeds reward assembly and the trace CSV.
struct SlotInfo {
  int t = 0;  // slot index after the step (1..T)
  Vec2 position;
  Vec2 velocity;  // flown velocity, after clamp and area clipping
  std::vector<double> ratios;
  std::vector<double> rates_bps;
  double sum_rate_mbps = 0.0;
  double energy_j = 0.0;
  double queue = 0.0;
  double drift = 0.0;
  double penalty = 0.0;
  double dpp = 0.0;
  double reward = 0.0;
};

struct StepResult {
  EnvState state;
  Observation obs;
  double reward = 0.0;
  bool done = false;
  SlotInfo info;
};

struct Transition {
  Observation obs;
  std::vector<double> action_raw;
  double reward = 0.0;
  Observation obs_next;
  bool done = false;
};

// Free-space line of sight: beta0 / (horizontal distance^2 + h^2).
double channel_gain(Vec2 uav, Vec2 device, const EnvConfig& cfg);

// Shannon rate of each device over its bandwidth share, bits/s.
std::vector<double> uplink_rates(Vec2 uav, const EnvConfig& cfg, std::span<const double> ratios);

// Rotary-wing propulsion power in watts at the given forward speed.
double propulsion_power(double speed);

// Throws DomainError unless the action satisfies the velocity and ratio invariants.
void check_action(const Action& a, const EnvConfig& cfg);

Action squash_raw_action(std::span<const double> raw, const EnvConfig& cfg);

// Overrides the velocity with a straight hop toward dest whenever the commanded
// move would leave dest out of reach in the remaining slots.
Vec2 reachability_clamp(Vec2 pos, Vec2 velocity, int t, const EnvConfig& cfg);

Vec2 clip_to_area(Vec2 p, const EnvConfig& cfg);

struct ResetResult {
  EnvState state;
  Observation obs;
};
ResetResult reset(const EnvConfig& cfg);

Observation build_observation(const EnvState& state, const EnvConfig& cfg);

// Applies a feasible action for one slot without advancing anything else.
// Used by step_action and by the per-slot baselines that enumerate actions.
SlotInfo evaluate_slot(const EnvState& state, const Action& action, const EnvConfig& cfg);

StepResult step_action(const EnvState& state, const Action& action, const EnvConfig& cfg);
StepResult step(const EnvState& state, std::span<const double> raw_action, const EnvConfig& cfg);

// Normalised log10 channel gain, clamped to [-1, 1] over [1e-12, 1e-8].
double normalized_log_gain(double gain);

}  // namespace lyapgdm::env
