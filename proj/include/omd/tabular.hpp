#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "omd/mdp.hpp"

namespace omd {

enum class TabularAgentKind {
    OmdReturn,   // projected ascent on J(pi_{phi(theta)})
    OmdBellman,  // projected descent on the true Bellman error of phi(theta)
    Mle,         // projected descent on avg KL + reward MSE
};

/// Gradient with respect to TabularModelParams, same layouts as the params.
struct TabularThetaGrad {
    std::vector<double> d_logits;
    std::vector<double> d_rewards;

    double max_abs() const;
};

/// Linear-map representation of d phi(theta) / d theta at a converged fixed
/// point q_star of the model-induced soft Bellman operator. Provides
/// vector-Jacobian products without materializing the Jacobian; dense() is
/// available for instances with at most 64 state-action entries.
class IftFixedPointJacobian {
public:
    /// Requires ||q_star - B^theta q_star||_inf <= residual_tol unless
    /// check_converged is false (used by the noise-injection experiments,
    /// which deliberately evaluate the rule at perturbed points).
    IftFixedPointJacobian(const TabularModelParams& theta, const QTable& q_star, double gamma,
                          double alpha, bool check_converged = true,
                          double residual_tol = 1e-8);

    /// v^T dphi/dtheta for a cotangent v over (s,a).
    TabularThetaGrad vjp(const std::vector<double>& cotangent) const;

    /// As vjp() but with the inverse Jacobian term replaced by the identity.
    TabularThetaGrad vjp_identity(const std::vector<double>& cotangent) const;

    /// Full dense Jacobian, rows indexed by (s,a), columns by theta
    /// components (logits block then rewards block). Only for
    /// n_states * n_actions <= 64.
    std::vector<std::vector<double>> dense() const;

    int n_states() const { return S_; }
    int n_actions() const { return A_; }

private:
    TabularThetaGrad apply_dtheta(const std::vector<double>& u) const;
    std::vector<double> solve_transposed(const std::vector<double>& g) const;

    int S_, A_;
    double gamma_, alpha_;
    std::vector<double> p_theta_;   // model dynamics, [s][a][s']
    std::vector<double> lse_w_;     // softmax(q_star(s,.)/alpha), [s][a]
    std::vector<double> v_soft_;    // lse_alpha(q_star(s,.)), per state
    std::vector<double> factor_;    // LU factors of (I - J_B)^T
    std::vector<int> pivots_;
};

struct ObjectiveGradient {
    TabularThetaGrad grad;
    double value = 0.0;  // J for the return objective, L^true for Bellman
    QTable q_star;
};

struct TabularGradientOptions {
    bool use_identity_inverse = false;
    const QTable* warm_start = nullptr;
    double fp_tol = 1e-10;
    int fp_max_iter = 100000;
};

/// Exact gradient of theta -> J(pi_{phi(theta)}) through the closed-form
/// return, the softmax policy, and the fixed point (implicit function
/// theorem).
ObjectiveGradient omd_return_gradient(const TabularMDP& mdp, const TabularModelParams& theta,
                                      double alpha, const TabularGradientOptions& opt = {});

/// Exact gradient of theta -> L^true(phi(theta)) where
/// L^true(Q) = sum_{s,a} (Q - BQ)^2 with B the true-model operator.
ObjectiveGradient omd_bellman_gradient(const TabularMDP& mdp, const TabularModelParams& theta,
                                       double alpha, const TabularGradientOptions& opt = {});

/// Gradient of the named objective evaluated at a caller-provided Q (which
/// may be a noisy perturbation of the fixed point).
TabularThetaGrad omd_return_gradient_at(const TabularMDP& mdp, const TabularModelParams& theta,
                                        const QTable& q, double alpha,
                                        bool use_identity_inverse = false);
TabularThetaGrad omd_bellman_gradient_at(const TabularMDP& mdp, const TabularModelParams& theta,
                                         const QTable& q, double alpha,
                                         bool use_identity_inverse = false);

/// Scales theta onto the ball of radius kappa when its norm exceeds kappa;
/// otherwise a no-op. theta = 0 is returned unchanged.
TabularModelParams project_norm_ball(TabularModelParams theta, double kappa);

/// (average KL over (s,a) of p against p_theta, mean squared reward error).
/// Zero-probability entries of p contribute zero; a zero p_theta entry under
/// a supported transition yields +infinity KL.
std::pair<double, double> mle_tabular_loss(const TabularMDP& mdp,
                                           const TabularModelParams& theta);

/// Gradient of avg KL + reward MSE.
TabularThetaGrad mle_tabular_gradient(const TabularMDP& mdp, const TabularModelParams& theta);

struct TabularTrainOptions {
    int steps = 2000;
    double learning_rate = 0.1;
    double alpha = 0.01;
    double kappa = 10.0;
    double init_sigma = 0.01;  // theta init scale; keep below alpha so the
                               // initial policy is not saturated
    uint64_t seed = 0;
    double noise_sigma = 0.0;          // Gaussian noise added to Q* before the gradient
    bool use_identity_inverse = false; // identity approximation of the inverse Jacobian
    bool warm_start = true;            // reuse the previous Q* across outer steps
};

struct TabularTrainResult {
    TabularModelParams theta_final;
    QTable q_final;
    std::vector<std::pair<int, double>> j_curve;     // (step, J), length steps + 1
    std::vector<std::pair<int, double>> kl_curve;    // (step, avg KL), length steps + 1
    std::vector<std::pair<int, double>> norm_curve;  // (step, ||theta||), length steps + 1
};

/// Projected gradient training of the tabular model. Deterministic given
/// options.seed; every iterate satisfies ||theta|| <= kappa.
TabularTrainResult train_tabular(const TabularMDP& mdp, TabularAgentKind kind,
                                 const TabularTrainOptions& options);

}  // namespace omd
