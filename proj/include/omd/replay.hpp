#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace omd {

struct Transition {
    std::vector<double> state;
    int action = 0;
    double reward = 0.0;
    std::vector<double> next_state;
    bool done = false;
};

/// Column batch of transitions (states row-major [size, dim]).
struct Batch {
    int size = 0;
    int dim = 0;
    std::vector<double> states;
    std::vector<int> actions;
    std::vector<double> rewards;
    std::vector<double> next_states;
    std::vector<uint8_t> done;
};

/// Fixed-capacity ring buffer with FIFO overwrite and uniform sampling over
/// the filled region.
class ReplayBuffer {
public:
    ReplayBuffer(size_t capacity, uint64_t seed);

    void add(Transition t);
    size_t size() const { return filled_; }
    size_t capacity() const { return capacity_; }

    /// Uniform sample with replacement from the filled region.
    Batch sample(int batch_size);
    const Transition& at(size_t i) const { return storage_[i]; }

private:
    size_t capacity_;
    size_t next_ = 0;
    size_t filled_ = 0;
    std::vector<Transition> storage_;
    std::mt19937_64 rng_;
};

}  // namespace omd
