#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "lyapgdm/env.hpp"
#include "lyapgdm/mlp.hpp"

namespace lyapgdm::baselines {

// Candidate actions for the per-slot solver: every (heading, speed, split)
// triple, enumerated heading-major. A zero heading means "no motion".
struct ActionGrid {
  std::vector<env::Vec2> headings;  // unit vectors or zero
  std::vector<double> speeds;
  std::vector<std::vector<double>> bandwidth_splits;

  std::size_t size() const { return headings.size() * speeds.size() * bandwidth_splits.size(); }
  env::Action at(std::size_t index) const;
  // Throws ConfigError if the grid is empty or any point is infeasible.
  void validate(const env::EnvConfig& cfg) const;
};

// 8 compass headings plus zero, speeds {0, 10, 20, 25} (capped at v_max),
// one-hot splits for every device plus the uniform split.
ActionGrid default_grid(const env::EnvConfig& cfg);

struct GridChoice {
  env::Action action;
  std::size_t index = 0;
  double dpp = 0.0;
};

// Minimises this slot's realised drift-plus-penalty over the grid; ties go to
// the lowest grid index.
GridChoice myopic_grid_solve(const env::EnvState& state, const env::EnvConfig& cfg,
                             const ActionGrid& grid);

std::vector<float> mlp_actor_action(std::span<const double> obs, const nn::ParamTensor<float>& params,
                                    const nn::MlpSpec& spec);

// i.i.d. standard-normal raw action.
std::vector<double> random_action(std::mt19937_64& rng, int action_dim);

// Straight-line cruise toward dest at 10 m/s with a uniform split; the final
// hop is shortened so the UAV stops at dest.
env::Action static_policy_action(const env::EnvState& state, const env::EnvConfig& cfg);

inline constexpr double kStaticCruiseSpeed = 10.0;

}  // namespace lyapgdm::baselines
