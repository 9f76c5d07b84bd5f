#pragma once

#include <utility>

#include "omd/mdp.hpp"

namespace omd {

/// Error and bound quantities for one (MLE model, OMD model) pair on a
/// common true MDP. All quantities are computed on reward tables shifted by
/// `reward_shift` so the true rewards are nonnegative; the shift cancels in
/// every error term and only enters through r_max.
struct BoundReport {
    double eps_p = 0.0;      // max_{s,a} L1 dynamics error of the MLE model
    double eps_r = 0.0;      // max_{s,a} reward error of the MLE model
    double eps_omd = 0.0;    // max_{s,a} Bellman-operator error on Q_hat_OMD
    double q_err_mle = 0.0;  // ||Q* - Q_hat_MLE||_inf
    double q_err_omd = 0.0;  // ||Q* - Q_hat_OMD||_inf
    double bound_mle = 0.0;
    double bound_omd = 0.0;
    double r_max = 0.0;
    double reward_shift = 0.0;
};

/// (eps_p, eps_r): worst-case L1 dynamics error and sup reward error of the
/// model against the true MDP.
std::pair<double, double> model_errors(const TabularMDP& mdp, const TabularModelParams& theta);

/// max_{s,a} |B q_hat - B^theta q_hat| with B the true-model soft operator.
double bellman_operator_error(const TabularMDP& mdp, const TabularModelParams& theta,
                              const QTable& q_hat, double alpha);

/// (bound_mle, bound_omd) of the approximation theorem:
///   bound_mle = eps_r/(1-gamma) + gamma eps_p r_max / (2 (1-gamma)^2)
///   bound_omd = eps / (1-gamma)
std::pair<double, double> theorem_bounds(double eps_p, double eps_r, double eps_omd,
                                         double gamma, double r_max);

/// Sup-norm difference of two same-shaped Q tables.
double q_star_error(const QTable& q_star, const QTable& q_hat);

/// True iff the two models induce the same Bellman image of q_star within
/// tol: max_{s,a} |B^a q_star - B^b q_star| <= tol.
bool check_value_equivalence(const TabularModelParams& theta_a,
                             const TabularModelParams& theta_b, const QTable& q_star,
                             double gamma, double alpha, double tol);

/// Full report for one sweep point; verifies the theorem inequalities
/// (q_err <= bound) and throws std::logic_error if either fails beyond
/// numerical slack.
BoundReport compute_bound_report(const TabularMDP& mdp, const TabularModelParams& theta_mle,
                                 const TabularModelParams& theta_omd, double alpha = 1e-6);

}  // namespace omd
