#include "omd/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace omd {

std::pair<double, double> model_errors(const TabularMDP& mdp, const TabularModelParams& theta) {
    if (theta.n_states != mdp.n_states || theta.n_actions != mdp.n_actions) {
        throw std::invalid_argument("model_errors: shape mismatch");
    }
    const int S = mdp.n_states;
    const int A = mdp.n_actions;
    auto p_theta = theta.dynamics();
    double eps_p = 0.0;
    double eps_r = 0.0;
    for (size_t row = 0; row < static_cast<size_t>(S) * A; ++row) {
        double l1 = 0.0;
        for (int s2 = 0; s2 < S; ++s2) {
            l1 += std::fabs(mdp.transitions[row * S + s2] - p_theta[row * S + s2]);
        }
        eps_p = std::max(eps_p, l1);
        eps_r = std::max(eps_r, std::fabs(mdp.rewards[row] - theta.model_rewards[row]));
    }
    return {eps_p, eps_r};
}

double bellman_operator_error(const TabularMDP& mdp, const TabularModelParams& theta,
                              const QTable& q_hat, double alpha) {
    QTable true_img = soft_bellman_apply(mdp.transitions, mdp.rewards, q_hat, mdp.gamma, alpha);
    auto p_theta = theta.dynamics();
    QTable model_img = soft_bellman_apply(p_theta, theta.model_rewards, q_hat, mdp.gamma, alpha);
    double eps = 0.0;
    for (size_t i = 0; i < true_img.values.size(); ++i) {
        eps = std::max(eps, std::fabs(true_img.values[i] - model_img.values[i]));
    }
    return eps;
}

std::pair<double, double> theorem_bounds(double eps_p, double eps_r, double eps_omd,
                                         double gamma, double r_max) {
    if (!(gamma >= 0.0 && gamma < 1.0)) {
        throw std::invalid_argument("theorem_bounds: gamma must be in [0,1)");
    }
    if (eps_p < 0.0 || eps_r < 0.0 || eps_omd < 0.0) {
        throw std::invalid_argument("theorem_bounds: errors must be nonnegative");
    }
    const double one_m = 1.0 - gamma;
    const double bound_mle = eps_r / one_m + gamma * eps_p * r_max / (2.0 * one_m * one_m);
    const double bound_omd = eps_omd / one_m;
    return {bound_mle, bound_omd};
}

double q_star_error(const QTable& q_star, const QTable& q_hat) {
    if (q_star.n_states != q_hat.n_states || q_star.n_actions != q_hat.n_actions) {
        throw std::invalid_argument("q_star_error: shape mismatch");
    }
    double m = 0.0;
    for (size_t i = 0; i < q_star.values.size(); ++i) {
        m = std::max(m, std::fabs(q_star.values[i] - q_hat.values[i]));
    }
    return m;
}

bool check_value_equivalence(const TabularModelParams& theta_a,
                             const TabularModelParams& theta_b, const QTable& q_star,
                             double gamma, double alpha, double tol) {
    auto pa = theta_a.dynamics();
    auto pb = theta_b.dynamics();
    QTable img_a = soft_bellman_apply(pa, theta_a.model_rewards, q_star, gamma, alpha);
    QTable img_b = soft_bellman_apply(pb, theta_b.model_rewards, q_star, gamma, alpha);
    return q_star_error(img_a, img_b) <= tol;
}

BoundReport compute_bound_report(const TabularMDP& mdp, const TabularModelParams& theta_mle,
                                 const TabularModelParams& theta_omd, double alpha) {
    // The theorem assumes rewards in [0, r_max]; shift both the true and the
    // model rewards by the same constant. Every error and Q difference is
    // shift-invariant, only r_max changes.
    double r_min = mdp.rewards[0];
    double r_max_raw = mdp.rewards[0];
    for (double r : mdp.rewards) {
        r_min = std::min(r_min, r);
        r_max_raw = std::max(r_max_raw, r);
    }
    const double shift = r_min < 0.0 ? -r_min : 0.0;

    TabularMDP shifted = mdp;
    for (double& r : shifted.rewards) r += shift;
    TabularModelParams mle = theta_mle;
    for (double& r : mle.model_rewards) r += shift;
    TabularModelParams omd = theta_omd;
    for (double& r : omd.model_rewards) r += shift;

    BoundReport rep;
    rep.reward_shift = shift;
    rep.r_max = r_max_raw + shift;

    QTable q_star = solve_fixed_point(shifted.transitions, shifted.rewards, shifted.n_states,
                                      shifted.n_actions, shifted.gamma, alpha);
    auto p_mle = mle.dynamics();
    QTable q_mle = solve_fixed_point(p_mle, mle.model_rewards, shifted.n_states,
                                     shifted.n_actions, shifted.gamma, alpha);
    auto p_omd = omd.dynamics();
    QTable q_omd = solve_fixed_point(p_omd, omd.model_rewards, shifted.n_states,
                                     shifted.n_actions, shifted.gamma, alpha);

    std::tie(rep.eps_p, rep.eps_r) = model_errors(shifted, mle);
    rep.eps_omd = bellman_operator_error(shifted, omd, q_omd, alpha);
    rep.q_err_mle = q_star_error(q_star, q_mle);
    rep.q_err_omd = q_star_error(q_star, q_omd);
    std::tie(rep.bound_mle, rep.bound_omd) =
        theorem_bounds(rep.eps_p, rep.eps_r, rep.eps_omd, shifted.gamma, rep.r_max);

    const double slack = 1e-9;
    if (rep.q_err_mle > rep.bound_mle + slack) {
        throw std::logic_error("compute_bound_report: MLE bound violated: q_err " +
                               std::to_string(rep.q_err_mle) + " > bound " +
                               std::to_string(rep.bound_mle));
    }
    if (rep.q_err_omd > rep.bound_omd + slack) {
        throw std::logic_error("compute_bound_report: OMD bound violated: q_err " +
                               std::to_string(rep.q_err_omd) + " > bound " +
                               std::to_string(rep.bound_omd));
    }
    return rep;
}

}  // namespace omd
