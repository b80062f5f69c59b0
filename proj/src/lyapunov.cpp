#include "lyapgdm/lyapunov.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lyapgdm/errors.hpp"

namespace lyapgdm::lyapunov {

namespace {

void check_budgets(const std::vector<double>& budgets) {
  if (budgets.empty()) throw DomainError("virtual queue bank needs at least one queue");
  for (double b : budgets) {
    if (!std::isfinite(b) || b <= 0.0) throw DomainError("queue budget must be finite and > 0");
  }
}

}  // namespace

VirtualQueueBank::VirtualQueueBank(std::vector<double> budgets)
    : queues_(budgets.size(), 0.0), budgets_(std::move(budgets)) {
  check_budgets(budgets_);
}

VirtualQueueBank::VirtualQueueBank(std::vector<double> queues, std::vector<double> budgets)
    : queues_(std::move(queues)), budgets_(std::move(budgets)) {
  check_budgets(budgets_);
  if (queues_.size() != budgets_.size()) {
    throw DomainError("queue count " + std::to_string(queues_.size()) +
                      " != budget count " + std::to_string(budgets_.size()));
  }
  for (double q : queues_) {
    if (!std::isfinite(q) || q < 0.0) throw DomainError("queue values must be finite and >= 0");
  }
}

void VirtualQueueBank::update(std::span<const double> consumed) {
  if (consumed.size() != queues_.size()) {
    throw DomainError("consumption vector length does not match queue count");
  }
  for (std::size_t i = 0; i < queues_.size(); ++i) {
    queues_[i] = virtual_queue_update(queues_[i], consumed[i], budgets_[i]);
  }
}

void VirtualQueueBank::reset() { std::fill(queues_.begin(), queues_.end(), 0.0); }

double virtual_queue_update(double q, double consumed, double budget) {
  if (!std::isfinite(q) || !std::isfinite(consumed) || !std::isfinite(budget)) {
    throw DomainError("virtual_queue_update: non-finite input");
  }
  if (budget <= 0.0) throw DomainError("virtual_queue_update: budget must be > 0");
  if (q < 0.0) throw DomainError("virtual_queue_update: queue must be >= 0");
  if (consumed < 0.0) throw DomainError("virtual_queue_update: consumption must be >= 0");
  return std::max(q + (consumed - budget) / budget, 0.0);
}

double lyapunov_value(std::span<const double> queues) {
  double sum = 0.0;
  for (double q : queues) sum += q * q;
  return 0.5 * sum;
}

double lyapunov_value(const VirtualQueueBank& bank) { return lyapunov_value(bank.queues()); }

}  // namespace lyapgdm::lyapunov
