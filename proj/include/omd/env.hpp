#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

namespace omd {

struct StepResult {
    std::vector<double> state;
    double reward = 0.0;
    bool done = false;
};

class Env {
public:
    virtual ~Env() = default;
    virtual std::vector<double> reset() = 0;
    virtual StepResult step(int action) = 0;
    virtual int state_dim() const = 0;
    virtual int n_actions() const = 0;
};

using EnvFactory = std::function<std::unique_ptr<Env>(uint64_t seed)>;

/// Cart-pole balancing with the standard benchmark constants (gravity 9.8,
/// cart mass 1.0, pole mass 0.1, half-length 0.5, force 10.0, Euler step
/// 0.02). Reward 1.0 per step; the episode ends when |position| > 2.4,
/// |angle| > 12 degrees, or after 500 steps. Initial state uniform in
/// [-0.05, 0.05]^4.
class CartPole : public Env {
public:
    explicit CartPole(uint64_t seed, int max_steps = 500);

    std::vector<double> reset() override;
    StepResult step(int action) override;
    int state_dim() const override { return 4; }
    int n_actions() const override { return 2; }

    /// Direct state override, for tests that poke at the thresholds.
    void set_state(const std::vector<double>& s);

private:
    std::mt19937_64 rng_;
    int max_steps_;
    int steps_ = 0;
    double x_ = 0.0, x_dot_ = 0.0, theta_ = 0.0, theta_dot_ = 0.0;
    bool done_ = true;
};

/// Appends n iid standard normal dimensions to the wrapped state, redrawn
/// on every step and reset. Base dimensions, rewards, and termination are
/// passed through untouched.
class DistractorWrapper : public Env {
public:
    DistractorWrapper(std::unique_ptr<Env> base, int n_distractors, uint64_t seed);

    std::vector<double> reset() override;
    StepResult step(int action) override;
    int state_dim() const override { return base_->state_dim() + n_; }
    int n_actions() const override { return base_->n_actions(); }

private:
    std::vector<double> augment(std::vector<double> s);

    std::unique_ptr<Env> base_;
    int n_;
    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace omd
