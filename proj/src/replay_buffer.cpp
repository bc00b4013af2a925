#include <stdexcept>
#include <unordered_set>

#include "dualreach/digrad.hpp"

namespace dualreach {

Batch make_batch(const std::vector<Transition>& transitions) {
  if (transitions.empty()) throw std::invalid_argument("empty batch");
  const auto& first = transitions.front();
  const auto n = static_cast<Eigen::Index>(transitions.size());
  Batch b;
  b.states.resize(first.state.size(), n);
  b.actions.resize(first.action.size(), n);
  b.next_states.resize(first.next_state.size(), n);
  b.rewards.resize(first.rewards.size(), n);
  b.done.resize(n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto& t = transitions[static_cast<std::size_t>(c)];
    if (t.state.size() != b.states.rows() || t.action.size() != b.actions.rows() ||
        t.next_state.size() != b.next_states.rows() || t.rewards.size() != b.rewards.rows())
      throw std::invalid_argument("transitions of mixed shapes in one batch");
    b.states.col(c) = t.state;
    b.actions.col(c) = t.action;
    b.next_states.col(c) = t.next_state;
    b.rewards.col(c) = t.rewards;
    b.done[c] = t.done ? 1.0 : 0.0;
  }
  return b;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
  data_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(Transition t) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[head_] = std::move(t);
    head_ = (head_ + 1) % capacity_;
  }
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= data_.size()) throw std::out_of_range("replay index out of range");
  return data_[(head_ + i) % data_.size()];
}

// Floyd's algorithm: n distinct indices with n draws.
std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
  if (data_.empty()) throw std::logic_error("sampling from an empty replay buffer");
  if (n > data_.size())
    throw std::invalid_argument("batch of " + std::to_string(n) + " exceeds buffer size " +
                                std::to_string(data_.size()));
  const std::size_t size = data_.size();
  std::unordered_set<std::size_t> seen;
  std::vector<std::size_t> out;
  out.reserve(n);
  for (std::size_t j = size - n; j < size; ++j) {
    std::uniform_int_distribution<std::size_t> u(0, j);
    const std::size_t t = u(rng);
    const std::size_t pick = seen.insert(t).second ? t : j;
    if (pick == j) seen.insert(j);
    out.push_back(pick);
  }
  return out;
}

Batch ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  const auto idx = sample_indices(n, rng);
  std::vector<Transition> picked;
  picked.reserve(n);
  for (auto i : idx) picked.push_back(data_[i]);
  return make_batch(picked);
}

}  // namespace dualreach
