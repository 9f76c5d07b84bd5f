#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "omd/env.hpp"
#include "omd/nets.hpp"
#include "omd/replay.hpp"

namespace omd {

enum class AgentKind { Omd, Mle, Vep };

enum class ExploreMode { EpsilonGreedy, Softmax, Greedy };

/// Two online Q networks with EMA target copies (double Q-learning). With
/// double_q off only net 1 and its target are used.
struct QNetworkPair {
    MlpSpec spec;
    std::vector<double> w1, w2;  // online
    std::vector<double> t1, t2;  // EMA targets
    double ema_tau = 0.005;
    bool double_q = true;

    static QNetworkPair create(const MlpSpec& spec, double ema_tau, bool double_q,
                               uint64_t seed);

    /// t <- (1 - tau) t + tau w for both pairs.
    void ema_update();
};

/// Deterministic dynamics and reward networks over (state, one-hot action).
struct ModelNetworks {
    MlpSpec dyn_spec;  // -> state_dim outputs
    MlpSpec rew_spec;  // -> 1 output
    std::vector<double> dyn, rew;

    static ModelNetworks create(int state_dim, int n_actions, int hidden, uint64_t seed);
};

struct ModelGrad {
    std::vector<double> d_dyn, d_rew;
};

/// Frozen policy/value sets for the value-equivalence baseline: the policies
/// are all deterministic state-independent ones (one per action, implicit),
/// the value functions are random MLPs frozen at startup.
struct VepSets {
    MlpSpec value_spec;
    std::vector<std::vector<double>> value_params;

    static VepSets create(int state_dim, int n_value_fns, int hidden, uint64_t seed);
};

/// Bellman error against model-generated targets:
///   mean_B (Q_w(s,a) - [r_theta(s,a) + gamma lse_alpha(minQ_target(f_theta(s,a)))])^2
/// summed over the online nets. Only (s,a) of the batch are used.
double inner_loss(const ModelNetworks& model, const QNetworkPair& q, const Batch& batch,
                  double alpha, double gamma);

/// Bellman error against real transitions; done zeroes the bootstrap term.
double outer_loss(const QNetworkPair& q, const Batch& batch, double alpha, double gamma);

struct OmdGradConfig {
    bool use_identity_inverse = true;
    double cg_tol = 1e-8;
    int cg_max_iter = 10;
};

/// Model gradient -(dL_true/dw) d^2 L(theta,w) / dtheta dw, with the inverse
/// inner Hessian approximated by the identity (default) or applied via
/// matrix-free CG.
ModelGrad omd_model_gradient(const ModelNetworks& model, const QNetworkPair& q,
                             const Batch& model_batch, const Batch& real_batch, double alpha,
                             double gamma, const OmdGradConfig& config = {},
                             double* inner_out = nullptr, double* outer_out = nullptr);

/// Gradients of mean ||f_theta(s,a) - s'||^2 and mean (r_theta(s,a) - r)^2.
ModelGrad mle_model_gradient(const ModelNetworks& model, const Batch& real_batch,
                             double* dyn_loss = nullptr, double* rew_loss = nullptr);

/// Squared differences between sampled true Bellman backups and the
/// model-induced ones, summed over the fixed policy and value sets and
/// normalized by (batch size x number of value functions). Each transition
/// matches exactly one state-independent deterministic policy (its own
/// action).
double vep_model_loss(const ModelNetworks& model, const Batch& real_batch, const VepSets& sets,
                      double gamma);
ModelGrad vep_model_gradient(const ModelNetworks& model, const Batch& real_batch,
                             const VepSets& sets, double gamma, double* loss_out = nullptr);

/// Action selection on net 1. `param` is epsilon for EpsilonGreedy and the
/// temperature for Softmax; Greedy breaks ties toward the lowest index.
int act(const QNetworkPair& q, std::span<const double> state, ExploreMode mode, double param,
        std::mt19937_64& rng);

/// Mean squared next-state prediction error over held-out transitions.
double model_mse(const ModelNetworks& model, const std::vector<Transition>& transitions);

struct AgentConfig {
    int total_steps = 200000;
    int eval_interval = 2500;
    int eval_episodes = 10;
    double gamma = 0.99;
    double alpha = 0.01;
    int batch_size = 256;
    int buffer_capacity = 100000;
    int warmup_steps = 1000;
    int k_inner = 1;
    double lr_theta = 1e-3;
    double lr_w = 1e-3;
    double ema_tau = 0.005;
    int q_hidden = 32;
    int model_hidden = 32;
    bool double_q = true;
    bool use_identity_inverse = true;
    double cg_tol = 1e-8;
    int cg_max_iter = 10;
    ExploreMode explore = ExploreMode::EpsilonGreedy;
    double epsilon = 0.1;
    int vep_value_fns = 5;
};

struct RunRow {
    int step = 0;
    double eval_return_mean = 0.0;
    double eval_return_stderr = 0.0;
    double model_mse = 0.0;
    double inner_loss = 0.0;
    double outer_loss = 0.0;
};

struct TrainOutput {
    std::vector<RunRow> rows;
    QNetworkPair q;
    ModelNetworks model;
    bool diverged = false;
};

/// Interleaves environment steps, K inner Q updates on model-generated
/// targets, and one model update per step (gradient chosen by the agent
/// kind). Deterministic given (config, seed). Evaluation runs
/// eval_episodes greedy episodes on a separate environment copy.
TrainOutput train_agent(const EnvFactory& factory, AgentKind kind, const AgentConfig& config,
                        uint64_t seed);

}  // namespace omd
