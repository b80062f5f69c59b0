#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace lyapgdm::lyapunov {

// Bank of I virtual queues. Each queue is stored dimensionless: the cumulative
// surplus over its per-slot budget, divided by that budget.
class VirtualQueueBank {
 public:
  explicit VirtualQueueBank(std::vector<double> budgets);
  VirtualQueueBank(std::vector<double> queues, std::vector<double> budgets);

  std::size_t size() const { return budgets_.size(); }
  std::span<const double> queues() const { return queues_; }
  std::span<const double> budgets() const { return budgets_; }
  double queue(std::size_t i) const { return queues_.at(i); }

  // Applies one slot of consumption to every queue (consumed.size() == size()).
  void update(std::span<const double> consumed);
  void reset();

  bool operator==(const VirtualQueueBank&) const = default;

 private:
  std::vector<double> queues_;
  std::vector<double> budgets_;
};

struct DppWeights {
  double v = 0.0;
};

// q' = max(q + (consumed - budget) / budget, 0). Throws DomainError on
// non-finite input, negative q or consumed, or a non-positive budget.
double virtual_queue_update(double q, double consumed, double budget);

// L = 1/2 * sum q_i^2
double lyapunov_value(const VirtualQueueBank& bank);
double lyapunov_value(std::span<const double> queues);

inline double lyapunov_drift(double l_next, double l_now) { return l_next - l_now; }

inline double drift_plus_penalty(double drift, double penalty, DppWeights w) {
  return drift + w.v * penalty;
}

inline double reward_from_dpp(double dpp) { return -dpp; }

}  // namespace lyapgdm::lyapunov
