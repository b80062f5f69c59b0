#include "lyapgdm/replay_buffer.hpp"

#include <algorithm>
#include <string>

#include "lyapgdm/errors.hpp"

namespace lyapgdm::rl {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("trainer.buffer_capacity: must be >= 1");
  items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(env::Transition transition) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(transition));
  } else {
    items_[cursor_] = std::move(transition);
  }
  cursor_ = (cursor_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch, std::mt19937_64& rng) const {
  if (batch == 0 || items_.size() < batch) {
    throw UsageError("replay buffer holds " + std::to_string(items_.size()) +
                     " transitions, cannot sample a batch of " + std::to_string(batch));
  }
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::vector<std::size_t> idx(batch);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

std::vector<const env::Transition*> ReplayBuffer::sample(std::size_t batch, std::mt19937_64& rng) const {
  std::vector<const env::Transition*> out;
  out.reserve(batch);
  for (std::size_t i : sample_indices(batch, rng)) out.push_back(&items_[i]);
  return out;
}

}  // namespace lyapgdm::rl
