#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace omd {

/// Thrown when an iterative solver exhausts its budget.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double residual)
        : std::runtime_error(what), residual_(residual) {}
    double residual() const { return residual_; }

private:
    double residual_;
};

/// Exact finite MDP. Tables are dense and row-major:
/// transitions[s][a][s'] flattened as s * n_actions * n_states + a * n_states + s',
/// rewards[s][a] flattened as s * n_actions + a.
struct TabularMDP {
    int n_states = 0;
    int n_actions = 0;
    std::vector<double> transitions;
    std::vector<double> rewards;
    double gamma = 0.0;
    std::vector<double> rho0;

    double p(int s, int a, int s2) const {
        return transitions[(static_cast<size_t>(s) * n_actions + a) * n_states + s2];
    }
    double r(int s, int a) const { return rewards[static_cast<size_t>(s) * n_actions + a]; }

    /// Checks all structural invariants (stochastic rows, valid rho0,
    /// gamma in [0,1)) and throws std::invalid_argument naming the first
    /// violation with its indices.
    void validate() const;
};

/// Learnable tabular model: dynamics logits plus a reward table. The induced
/// dynamics p_theta(.|s,a) is the row softmax of logits[s][a][.].
struct TabularModelParams {
    int n_states = 0;
    int n_actions = 0;
    std::vector<double> logits;         // [s][a][s']
    std::vector<double> model_rewards;  // [s][a]

    /// Row-softmax of the logits, same layout as TabularMDP::transitions.
    std::vector<double> dynamics() const;

    /// Euclidean norm of the concatenation of all logits and reward entries.
    double norm() const;

    size_t param_count() const { return logits.size() + model_rewards.size(); }
};

struct QTable {
    int n_states = 0;
    int n_actions = 0;
    std::vector<double> values;  // [s][a]

    static QTable zeros(int n_states, int n_actions) {
        return QTable{n_states, n_actions,
                      std::vector<double>(static_cast<size_t>(n_states) * n_actions, 0.0)};
    }
    double at(int s, int a) const { return values[static_cast<size_t>(s) * n_actions + a]; }
    double& at(int s, int a) { return values[static_cast<size_t>(s) * n_actions + a]; }
};

struct SoftmaxPolicy {
    int n_states = 0;
    int n_actions = 0;
    std::vector<double> probs;  // pi[a|s], layout [s][a]
    double temperature = 1.0;

    double at(int s, int a) const { return probs[static_cast<size_t>(s) * n_actions + a]; }
};

/// alpha * log sum_i exp(x_i / alpha), computed with max-shift so it never
/// overflows for |x| <= 1e6 and alpha >= 1e-8. Throws std::invalid_argument
/// on an empty or non-finite input or alpha <= 0.
double stable_logsumexp(std::span<const double> x, double alpha);

/// One application of the soft Bellman optimality operator
///   (B Q)(s,a) = rewards(s,a) + gamma * sum_s' dynamics(s'|s,a) * lse_alpha(Q(s',.))
/// for an arbitrary (dynamics, rewards) pair, so the same routine serves the
/// true-model operator and the model-induced operator.
QTable soft_bellman_apply(std::span<const double> dynamics, std::span<const double> rewards,
                          const QTable& q, double gamma, double alpha);

/// Fixed-point iteration Q <- BQ until the sup-norm residual drops to tol.
/// Throws ConvergenceError (carrying the last residual) if max_iter is
/// exhausted. `iterations`, when given, receives the iteration count.
QTable solve_fixed_point(std::span<const double> dynamics, std::span<const double> rewards,
                         int n_states, int n_actions, double gamma, double alpha,
                         double tol = 1e-10, int max_iter = 100000,
                         const QTable* q_init = nullptr, int* iterations = nullptr);

/// Row-wise softmax policy pi(a|s) = exp(Q(s,a)/alpha) / sum_a' exp(Q(s,a')/alpha).
SoftmaxPolicy softmax_policy(const QTable& q, double alpha);

struct PolicyEvaluation {
    std::vector<double> values;     // v, per state
    std::vector<double> occupancy;  // (I - gamma * P_pi^T)^-1 rho0, per state
    double j = 0.0;                 // rho0 . v
};

/// Exact policy evaluation in the true MDP via the dense linear solve
/// (I - gamma * P_pi) v = r_pi.
PolicyEvaluation evaluate_policy(const TabularMDP& mdp, const SoftmaxPolicy& policy);

/// Closed-form expected discounted return J = rho0^T (I - gamma P_pi)^-1 r_pi.
double expected_return(const TabularMDP& mdp, const SoftmaxPolicy& policy);

}  // namespace omd
