#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "lyapgdm/env.hpp"

namespace lyapgdm::rl {

// Fixed-capacity ring of transitions; the oldest entry is overwritten once full.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(env::Transition transition);

  // Uniform with replacement. Throws UsageError when size() < batch.
  std::vector<std::size_t> sample_indices(std::size_t batch, std::mt19937_64& rng) const;
  std::vector<const env::Transition*> sample(std::size_t batch, std::mt19937_64& rng) const;

  const env::Transition& at(std::size_t i) const { return items_.at(i); }
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t cursor() const { return cursor_; }

 private:
  std::vector<env::Transition> items_;
  std::size_t capacity_;
  std::size_t cursor_ = 0;
};

}  // namespace lyapgdm::rl
