#include "omd/replay.hpp"

#include <stdexcept>

#include "omd/rng.hpp"

namespace omd {

ReplayBuffer::ReplayBuffer(size_t capacity, uint64_t seed)
    : capacity_(capacity), rng_(make_rng(seed, "replay_buffer")) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
    storage_.resize(capacity);
}

void ReplayBuffer::add(Transition t) {
    storage_[next_] = std::move(t);
    next_ = (next_ + 1) % capacity_;
    if (filled_ < capacity_) ++filled_;
}

Batch ReplayBuffer::sample(int batch_size) {
    if (filled_ == 0) throw std::runtime_error("ReplayBuffer: sample from empty buffer");
    if (batch_size < 1) throw std::invalid_argument("ReplayBuffer: batch_size must be >= 1");
    std::uniform_int_distribution<size_t> pick(0, filled_ - 1);
    Batch b;
    b.size = batch_size;
    b.dim = static_cast<int>(storage_[0].state.size());
    b.states.reserve(static_cast<size_t>(batch_size) * b.dim);
    b.next_states.reserve(static_cast<size_t>(batch_size) * b.dim);
    b.actions.reserve(batch_size);
    b.rewards.reserve(batch_size);
    b.done.reserve(batch_size);
    for (int i = 0; i < batch_size; ++i) {
        const Transition& t = storage_[pick(rng_)];
        b.states.insert(b.states.end(), t.state.begin(), t.state.end());
        b.next_states.insert(b.next_states.end(), t.next_state.begin(), t.next_state.end());
        b.actions.push_back(t.action);
        b.rewards.push_back(t.reward);
        b.done.push_back(t.done ? 1 : 0);
    }
    return b;
}

}  // namespace omd
