#include "omd/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "omd/linalg.hpp"

namespace omd {

namespace {

std::string idx2(const char* name, int s, int a) {
    return std::string(name) + "[" + std::to_string(s) + "][" + std::to_string(a) + "]";
}

}  // namespace

void TabularMDP::validate() const {
    if (n_states <= 0) throw std::invalid_argument("TabularMDP: n_states must be positive");
    if (n_actions <= 0) throw std::invalid_argument("TabularMDP: n_actions must be positive");
    if (!(gamma >= 0.0 && gamma < 1.0)) {
        throw std::invalid_argument("TabularMDP: gamma must be in [0,1), got " +
                                    std::to_string(gamma));
    }
    const size_t sa = static_cast<size_t>(n_states) * n_actions;
    if (transitions.size() != sa * n_states) {
        throw std::invalid_argument("TabularMDP: transitions has wrong size");
    }
    if (rewards.size() != sa) throw std::invalid_argument("TabularMDP: rewards has wrong size");
    if (rho0.size() != static_cast<size_t>(n_states)) {
        throw std::invalid_argument("TabularMDP: rho0 has wrong size");
    }
    for (int s = 0; s < n_states; ++s) {
        for (int a = 0; a < n_actions; ++a) {
            double sum = 0.0;
            for (int s2 = 0; s2 < n_states; ++s2) {
                const double v = p(s, a, s2);
                if (!(v >= 0.0)) {
                    throw std::invalid_argument("TabularMDP: negative probability at " +
                                                idx2("transitions", s, a) + "[" +
                                                std::to_string(s2) + "]");
                }
                sum += v;
            }
            if (std::fabs(sum - 1.0) > 1e-9) {
                throw std::invalid_argument("TabularMDP: row " + idx2("transitions", s, a) +
                                            " sums to " + std::to_string(sum) + ", expected 1");
            }
            if (!std::isfinite(r(s, a))) {
                throw std::invalid_argument("TabularMDP: non-finite reward at " +
                                            idx2("rewards", s, a));
            }
        }
    }
    double rho_sum = 0.0;
    for (int s = 0; s < n_states; ++s) {
        if (!(rho0[s] >= 0.0)) {
            throw std::invalid_argument("TabularMDP: negative rho0[" + std::to_string(s) + "]");
        }
        rho_sum += rho0[s];
    }
    if (std::fabs(rho_sum - 1.0) > 1e-9) {
        throw std::invalid_argument("TabularMDP: rho0 sums to " + std::to_string(rho_sum) +
                                    ", expected 1");
    }
}

std::vector<double> TabularModelParams::dynamics() const {
    std::vector<double> out(logits.size());
    const size_t rows = static_cast<size_t>(n_states) * n_actions;
    for (size_t row = 0; row < rows; ++row) {
        const double* l = logits.data() + row * n_states;
        double* o = out.data() + row * n_states;
        double m = l[0];
        for (int k = 1; k < n_states; ++k) m = std::max(m, l[k]);
        double sum = 0.0;
        for (int k = 0; k < n_states; ++k) {
            o[k] = std::exp(l[k] - m);
            sum += o[k];
        }
        const double inv = 1.0 / sum;
        for (int k = 0; k < n_states; ++k) o[k] *= inv;
    }
    return out;
}

double TabularModelParams::norm() const {
    double s = 0.0;
    for (double v : logits) s += v * v;
    for (double v : model_rewards) s += v * v;
    return std::sqrt(s);
}

double stable_logsumexp(std::span<const double> x, double alpha) {
    if (x.empty()) throw std::invalid_argument("stable_logsumexp: empty input");
    if (!(alpha > 0.0)) throw std::invalid_argument("stable_logsumexp: alpha must be positive");
    double m = -std::numeric_limits<double>::infinity();
    for (double v : x) {
        if (std::isnan(v)) throw std::invalid_argument("stable_logsumexp: NaN input");
        m = std::max(m, v);
    }
    double sum = 0.0;
    for (double v : x) sum += std::exp((v - m) / alpha);
    return m + alpha * std::log(sum);
}

QTable soft_bellman_apply(std::span<const double> dynamics, std::span<const double> rewards,
                          const QTable& q, double gamma, double alpha) {
    const int S = q.n_states;
    const int A = q.n_actions;
    const size_t sa = static_cast<size_t>(S) * A;
    if (dynamics.size() != sa * S || rewards.size() != sa ||
        q.values.size() != sa) {
        throw std::invalid_argument("soft_bellman_apply: shape mismatch");
    }
    std::vector<double> v(S);
    for (int s2 = 0; s2 < S; ++s2) {
        v[s2] = stable_logsumexp(std::span<const double>(q.values).subspan(
                                     static_cast<size_t>(s2) * A, A),
                                 alpha);
    }
    QTable out = QTable::zeros(S, A);
    for (size_t row = 0; row < sa; ++row) {
        const double* p = dynamics.data() + row * S;
        double exp_v = 0.0;
        for (int s2 = 0; s2 < S; ++s2) exp_v += p[s2] * v[s2];
        out.values[row] = rewards[row] + gamma * exp_v;
    }
    return out;
}

QTable solve_fixed_point(std::span<const double> dynamics, std::span<const double> rewards,
                         int n_states, int n_actions, double gamma, double alpha, double tol,
                         int max_iter, const QTable* q_init, int* iterations) {
    if (!(tol > 0.0)) throw std::invalid_argument("solve_fixed_point: tol must be positive");
    if (max_iter < 1) throw std::invalid_argument("solve_fixed_point: max_iter must be >= 1");
    QTable q = q_init ? *q_init : QTable::zeros(n_states, n_actions);
    double residual = std::numeric_limits<double>::infinity();
    for (int it = 1; it <= max_iter; ++it) {
        QTable next = soft_bellman_apply(dynamics, rewards, q, gamma, alpha);
        residual = 0.0;
        for (size_t i = 0; i < q.values.size(); ++i) {
            residual = std::max(residual, std::fabs(next.values[i] - q.values[i]));
        }
        q = std::move(next);
        if (residual <= tol) {
            if (iterations) *iterations = it;
            return q;
        }
    }
    throw ConvergenceError("solve_fixed_point: residual " + std::to_string(residual) +
                               " > tol after " + std::to_string(max_iter) + " iterations",
                           residual);
}

SoftmaxPolicy softmax_policy(const QTable& q, double alpha) {
    if (!(alpha > 0.0)) throw std::invalid_argument("softmax_policy: alpha must be positive");
    for (double v : q.values) {
        if (std::isnan(v)) throw std::invalid_argument("softmax_policy: NaN in Q table");
    }
    SoftmaxPolicy pi{q.n_states, q.n_actions,
                     std::vector<double>(q.values.size(), 0.0), alpha};
    for (int s = 0; s < q.n_states; ++s) {
        const double* row = q.values.data() + static_cast<size_t>(s) * q.n_actions;
        double m = row[0];
        for (int a = 1; a < q.n_actions; ++a) m = std::max(m, row[a]);
        double sum = 0.0;
        double* out = pi.probs.data() + static_cast<size_t>(s) * q.n_actions;
        for (int a = 0; a < q.n_actions; ++a) {
            out[a] = std::exp((row[a] - m) / alpha);
            sum += out[a];
        }
        const double inv = 1.0 / sum;
        for (int a = 0; a < q.n_actions; ++a) out[a] *= inv;
    }
    return pi;
}

PolicyEvaluation evaluate_policy(const TabularMDP& mdp, const SoftmaxPolicy& policy) {
    const int S = mdp.n_states;
    const int A = mdp.n_actions;
    if (policy.n_states != S || policy.n_actions != A) {
        throw std::invalid_argument("evaluate_policy: policy shape mismatch");
    }
    // Policy-averaged dynamics and rewards.
    std::vector<double> p_pi(static_cast<size_t>(S) * S, 0.0);
    std::vector<double> r_pi(S, 0.0);
    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
            const double w = policy.at(s, a);
            r_pi[s] += w * mdp.r(s, a);
            for (int s2 = 0; s2 < S; ++s2) p_pi[static_cast<size_t>(s) * S + s2] += w * mdp.p(s, a, s2);
        }
    }
    // (I - gamma P_pi) v = r_pi
    std::vector<double> m(static_cast<size_t>(S) * S);
    for (int i = 0; i < S; ++i) {
        for (int j = 0; j < S; ++j) {
            m[static_cast<size_t>(i) * S + j] =
                (i == j ? 1.0 : 0.0) - mdp.gamma * p_pi[static_cast<size_t>(i) * S + j];
        }
    }
    PolicyEvaluation ev;
    ev.values = solve_dense(m, r_pi, S);
    // (I - gamma P_pi^T) d = rho0
    std::vector<double> mt(static_cast<size_t>(S) * S);
    for (int i = 0; i < S; ++i) {
        for (int j = 0; j < S; ++j) {
            mt[static_cast<size_t>(i) * S + j] =
                (i == j ? 1.0 : 0.0) - mdp.gamma * p_pi[static_cast<size_t>(j) * S + i];
        }
    }
    ev.occupancy = solve_dense(mt, mdp.rho0, S);
    ev.j = 0.0;
    for (int s = 0; s < S; ++s) ev.j += mdp.rho0[s] * ev.values[s];
    return ev;
}

double expected_return(const TabularMDP& mdp, const SoftmaxPolicy& policy) {
    return evaluate_policy(mdp, policy).j;
}

}  // namespace omd
