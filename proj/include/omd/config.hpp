#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace omd {

inline constexpr const char* kVersionString = "omd-toolkit 0.1.0";

/// Experiment configuration. Every field is validated against its
/// documented range before a run starts; unknown keys in a config file are
/// rejected.
struct RunConfig {
    std::string experiment = "cartpole";
    std::string agent = "omd";  // omd | mle | vep (single-agent experiments)
    std::vector<std::string> agents = {"omd", "mle", "vep"};  // fig5 sweeps
    std::vector<uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};

    // Function-approximation hyperparameters (Appendix-D defaults).
    double gamma = 0.99;
    double alpha = 0.01;
    double lr_theta = 1e-3;
    double lr_w = 1e-3;
    double tau = 0.005;
    int k_inner = 1;
    int q_hidden = 32;
    int model_hidden = 32;
    int n_distractors = 0;
    int steps = 200000;
    int eval_interval = 2500;
    int eval_episodes = 10;
    int batch_size = 256;
    int buffer_capacity = 100000;
    int warmup_steps = 1000;
    double epsilon = 0.1;
    std::string explore = "epsilon_greedy";  // epsilon_greedy | softmax
    bool double_q = true;
    bool use_identity_inverse = true;
    int vep_value_fns = 5;

    // Tabular hyperparameters. kappa is the norm-ball radius used by the
    // single-point tabular experiments (appendixC noise study).
    double kappa = 1.0;
    int tabular_steps = 12000;
    double tabular_lr = 0.1;
    double tabular_alpha = 0.01;
    double noise_sigma = 0.0;
    std::string mdp_file;  // empty: the repo default 2-state MDP

    // Sweep grids.
    std::vector<double> kappa_grid;       // default: log grid [0.5, 50], 12 points
    std::vector<double> bounds_kappa_grid = {1.0, 1.3, 1.7, 2.2, 2.8, 3.4};
    std::vector<double> sigma_grid = {0.0, 0.01, 0.03, 0.1, 0.3, 1.0};
    std::vector<int> hidden_grid = {1, 2, 3, 4, 6, 12};
    std::vector<int> distractor_grid = {16, 32, 64, 128, 256, 512};
    std::vector<int> k_grid = {1, 3, 10};

    RunConfig();

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;

    std::string to_json() const;
    static RunConfig from_json(const std::string& text);
    static RunConfig load(const std::string& path);

    /// FNV-1a over the canonical serialization.
    uint64_t hash() const;

    /// The documented fast profile: 60k CartPole steps, 3 seeds.
    void apply_fast_profile();
};

}  // namespace omd
