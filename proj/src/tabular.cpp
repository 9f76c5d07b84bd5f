#include "omd/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "omd/linalg.hpp"
#include "omd/rng.hpp"

namespace omd {

double TabularThetaGrad::max_abs() const {
    double m = 0.0;
    for (double v : d_logits) m = std::max(m, std::fabs(v));
    for (double v : d_rewards) m = std::max(m, std::fabs(v));
    return m;
}

IftFixedPointJacobian::IftFixedPointJacobian(const TabularModelParams& theta,
                                             const QTable& q_star, double gamma, double alpha,
                                             bool check_converged, double residual_tol)
    : S_(theta.n_states), A_(theta.n_actions), gamma_(gamma), alpha_(alpha) {
    p_theta_ = theta.dynamics();
    if (check_converged) {
        QTable bq = soft_bellman_apply(p_theta_, theta.model_rewards, q_star, gamma, alpha);
        double res = 0.0;
        for (size_t i = 0; i < bq.values.size(); ++i) {
            res = std::max(res, std::fabs(q_star.values[i] - bq.values[i]));
        }
        if (res > residual_tol) {
            throw std::invalid_argument(
                "IftFixedPointJacobian: q_star residual " + std::to_string(res) +
                " exceeds tolerance " + std::to_string(residual_tol));
        }
    }

    // Log-sum-exp weights and values of q_star, used by both dB/dQ and
    // dB/dtheta.
    lse_w_ = softmax_policy(q_star, alpha).probs;
    v_soft_.resize(S_);
    for (int s = 0; s < S_; ++s) {
        v_soft_[s] = stable_logsumexp(
            std::span<const double>(q_star.values).subspan(static_cast<size_t>(s) * A_, A_),
            alpha);
    }

    // (I - J_B)^T with J_B[(s,a)][(s',a')] = gamma p_theta(s'|s,a) w(a'|s').
    const int n = S_ * A_;
    factor_.assign(static_cast<size_t>(n) * n, 0.0);
    for (int s = 0; s < S_; ++s) {
        for (int a = 0; a < A_; ++a) {
            const int row = s * A_ + a;
            factor_[static_cast<size_t>(row) * n + row] += 1.0;
            const double* p = p_theta_.data() + static_cast<size_t>(row) * S_;
            for (int s2 = 0; s2 < S_; ++s2) {
                for (int a2 = 0; a2 < A_; ++a2) {
                    const int col = s2 * A_ + a2;
                    // transposed: entry (col, row)
                    factor_[static_cast<size_t>(col) * n + row] -=
                        gamma_ * p[s2] * lse_w_[static_cast<size_t>(s2) * A_ + a2];
                }
            }
        }
    }
    // LU factorization with partial pivoting, kept for repeated solves.
    pivots_.resize(n);
    for (int k = 0; k < n; ++k) {
        int piv = k;
        double best = std::fabs(factor_[static_cast<size_t>(k) * n + k]);
        for (int i = k + 1; i < n; ++i) {
            double v = std::fabs(factor_[static_cast<size_t>(i) * n + k]);
            if (v > best) {
                best = v;
                piv = i;
            }
        }
        if (best < 1e-300) throw std::runtime_error("IftFixedPointJacobian: singular system");
        pivots_[k] = piv;
        if (piv != k) {
            for (int j = 0; j < n; ++j) {
                std::swap(factor_[static_cast<size_t>(k) * n + j],
                          factor_[static_cast<size_t>(piv) * n + j]);
            }
        }
        const double inv = 1.0 / factor_[static_cast<size_t>(k) * n + k];
        for (int i = k + 1; i < n; ++i) {
            double& f = factor_[static_cast<size_t>(i) * n + k];
            f *= inv;
            if (f == 0.0) continue;
            for (int j = k + 1; j < n; ++j) {
                factor_[static_cast<size_t>(i) * n + j] -= f * factor_[static_cast<size_t>(k) * n + j];
            }
        }
    }
}

std::vector<double> IftFixedPointJacobian::solve_transposed(const std::vector<double>& g) const {
    const int n = S_ * A_;
    std::vector<double> x = g;
    for (int k = 0; k < n; ++k) {
        if (pivots_[k] != k) std::swap(x[k], x[pivots_[k]]);
        for (int i = k + 1; i < n; ++i) x[i] -= factor_[static_cast<size_t>(i) * n + k] * x[k];
    }
    for (int i = n - 1; i >= 0; --i) {
        double s = x[i];
        for (int j = i + 1; j < n; ++j) s -= factor_[static_cast<size_t>(i) * n + j] * x[j];
        x[i] = s / factor_[static_cast<size_t>(i) * n + i];
    }
    return x;
}

TabularThetaGrad IftFixedPointJacobian::apply_dtheta(const std::vector<double>& u) const {
    // g_theta = u^T dB^theta/dtheta. The reward block is the identity; the
    // logits block goes through the row softmax of the logits.
    TabularThetaGrad g;
    g.d_rewards = u;
    g.d_logits.assign(static_cast<size_t>(S_) * A_ * S_, 0.0);
    for (int s = 0; s < S_; ++s) {
        for (int a = 0; a < A_; ++a) {
            const size_t row = static_cast<size_t>(s) * A_ + a;
            const double* p = p_theta_.data() + row * S_;
            double mean_v = 0.0;
            for (int k = 0; k < S_; ++k) mean_v += p[k] * v_soft_[k];
            const double scale = u[row] * gamma_;
            double* out = g.d_logits.data() + row * S_;
            for (int k = 0; k < S_; ++k) out[k] = scale * p[k] * (v_soft_[k] - mean_v);
        }
    }
    return g;
}

TabularThetaGrad IftFixedPointJacobian::vjp(const std::vector<double>& cotangent) const {
    if (cotangent.size() != static_cast<size_t>(S_) * A_) {
        throw std::invalid_argument("IftFixedPointJacobian::vjp: cotangent shape mismatch");
    }
    return apply_dtheta(solve_transposed(cotangent));
}

TabularThetaGrad IftFixedPointJacobian::vjp_identity(const std::vector<double>& cotangent) const {
    if (cotangent.size() != static_cast<size_t>(S_) * A_) {
        throw std::invalid_argument("IftFixedPointJacobian::vjp: cotangent shape mismatch");
    }
    return apply_dtheta(cotangent);
}

std::vector<std::vector<double>> IftFixedPointJacobian::dense() const {
    const int n = S_ * A_;
    if (n > 64) {
        throw std::invalid_argument("IftFixedPointJacobian::dense: instance too large");
    }
    std::vector<std::vector<double>> rows;
    rows.reserve(n);
    for (int i = 0; i < n; ++i) {
        std::vector<double> e(n, 0.0);
        e[i] = 1.0;
        TabularThetaGrad g = vjp(e);
        std::vector<double> row;
        row.reserve(g.d_logits.size() + g.d_rewards.size());
        row.insert(row.end(), g.d_logits.begin(), g.d_logits.end());
        row.insert(row.end(), g.d_rewards.begin(), g.d_rewards.end());
        rows.push_back(std::move(row));
    }
    return rows;
}

namespace {

QTable solve_model_fixed_point(const TabularModelParams& theta, double gamma, double alpha,
                               const TabularGradientOptions& opt) {
    auto dyn = theta.dynamics();
    return solve_fixed_point(dyn, theta.model_rewards, theta.n_states, theta.n_actions, gamma,
                             alpha, opt.fp_tol, opt.fp_max_iter, opt.warm_start);
}

// dJ/dQ at q: policy-gradient for the closed-form J composed with the
// softmax Jacobian.
std::vector<double> return_q_cotangent(const TabularMDP& mdp, const QTable& q, double alpha,
                                       double* j_out) {
    const int S = mdp.n_states;
    const int A = mdp.n_actions;
    SoftmaxPolicy pi = softmax_policy(q, alpha);
    PolicyEvaluation ev = evaluate_policy(mdp, pi);
    if (j_out) *j_out = ev.j;

    // dJ/dpi(a|s) = occupancy(s) * (r(s,a) + gamma sum_s' p(s'|s,a) v(s'))
    std::vector<double> u_pi(static_cast<size_t>(S) * A);
    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
            double av = mdp.r(s, a);
            for (int s2 = 0; s2 < S; ++s2) av += mdp.gamma * mdp.p(s, a, s2) * ev.values[s2];
            u_pi[static_cast<size_t>(s) * A + a] = ev.occupancy[s] * av;
        }
    }
    // Softmax Jacobian: dJ/dQ(s,a) = pi(a|s)/alpha * (u(s,a) - <u(s,.), pi(.|s)>)
    std::vector<double> g(static_cast<size_t>(S) * A);
    for (int s = 0; s < S; ++s) {
        double dot = 0.0;
        for (int a = 0; a < A; ++a) {
            dot += u_pi[static_cast<size_t>(s) * A + a] * pi.at(s, a);
        }
        for (int a = 0; a < A; ++a) {
            const size_t i = static_cast<size_t>(s) * A + a;
            g[i] = pi.at(s, a) / alpha * (u_pi[i] - dot);
        }
    }
    return g;
}

// dL^true/dQ at q with L^true(Q) = sum (Q - BQ)^2, B the true-model soft
// operator.
std::vector<double> bellman_q_cotangent(const TabularMDP& mdp, const QTable& q, double alpha,
                                        double* l_out) {
    const int S = mdp.n_states;
    const int A = mdp.n_actions;
    QTable bq = soft_bellman_apply(mdp.transitions, mdp.rewards, q, mdp.gamma, alpha);
    std::vector<double> d(q.values.size());
    double l = 0.0;
    for (size_t i = 0; i < d.size(); ++i) {
        d[i] = q.values[i] - bq.values[i];
        l += d[i] * d[i];
    }
    if (l_out) *l_out = l;
    // g = 2d - J_B^T (2d) with J_B[(s,a)][(s',a')] = gamma p(s'|s,a) w(a'|s'),
    // w the lse weights of q under the true operator.
    SoftmaxPolicy w = softmax_policy(q, alpha);
    std::vector<double> g(d.size());
    for (size_t i = 0; i < d.size(); ++i) g[i] = 2.0 * d[i];
    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
            const size_t row = static_cast<size_t>(s) * A + a;
            const double scale = 2.0 * d[row] * mdp.gamma;
            if (scale == 0.0) continue;
            for (int s2 = 0; s2 < S; ++s2) {
                const double ps = mdp.p(s, a, s2);
                if (ps == 0.0) continue;
                for (int a2 = 0; a2 < A; ++a2) {
                    g[static_cast<size_t>(s2) * A + a2] -= scale * ps * w.at(s2, a2);
                }
            }
        }
    }
    return g;
}

}  // namespace

TabularThetaGrad omd_return_gradient_at(const TabularMDP& mdp, const TabularModelParams& theta,
                                        const QTable& q, double alpha,
                                        bool use_identity_inverse) {
    std::vector<double> g = return_q_cotangent(mdp, q, alpha, nullptr);
    IftFixedPointJacobian ift(theta, q, mdp.gamma, alpha, /*check_converged=*/false);
    return use_identity_inverse ? ift.vjp_identity(g) : ift.vjp(g);
}

TabularThetaGrad omd_bellman_gradient_at(const TabularMDP& mdp, const TabularModelParams& theta,
                                         const QTable& q, double alpha,
                                         bool use_identity_inverse) {
    std::vector<double> g = bellman_q_cotangent(mdp, q, alpha, nullptr);
    IftFixedPointJacobian ift(theta, q, mdp.gamma, alpha, /*check_converged=*/false);
    return use_identity_inverse ? ift.vjp_identity(g) : ift.vjp(g);
}

ObjectiveGradient omd_return_gradient(const TabularMDP& mdp, const TabularModelParams& theta,
                                      double alpha, const TabularGradientOptions& opt) {
    ObjectiveGradient out;
    out.q_star = solve_model_fixed_point(theta, mdp.gamma, alpha, opt);
    std::vector<double> g = return_q_cotangent(mdp, out.q_star, alpha, &out.value);
    IftFixedPointJacobian ift(theta, out.q_star, mdp.gamma, alpha);
    out.grad = opt.use_identity_inverse ? ift.vjp_identity(g) : ift.vjp(g);
    return out;
}

ObjectiveGradient omd_bellman_gradient(const TabularMDP& mdp, const TabularModelParams& theta,
                                       double alpha, const TabularGradientOptions& opt) {
    ObjectiveGradient out;
    out.q_star = solve_model_fixed_point(theta, mdp.gamma, alpha, opt);
    std::vector<double> g = bellman_q_cotangent(mdp, out.q_star, alpha, &out.value);
    IftFixedPointJacobian ift(theta, out.q_star, mdp.gamma, alpha);
    out.grad = opt.use_identity_inverse ? ift.vjp_identity(g) : ift.vjp(g);
    return out;
}

TabularModelParams project_norm_ball(TabularModelParams theta, double kappa) {
    if (!(kappa > 0.0)) throw std::invalid_argument("project_norm_ball: kappa must be positive");
    const double n = theta.norm();
    if (n > kappa) {
        const double scale = kappa / n;
        for (double& v : theta.logits) v *= scale;
        for (double& v : theta.model_rewards) v *= scale;
    }
    return theta;
}

std::pair<double, double> mle_tabular_loss(const TabularMDP& mdp,
                                           const TabularModelParams& theta) {
    const int S = mdp.n_states;
    const int A = mdp.n_actions;
    auto p_theta = theta.dynamics();
    double kl = 0.0;
    double mse = 0.0;
    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
            const size_t row = static_cast<size_t>(s) * A + a;
            for (int s2 = 0; s2 < S; ++s2) {
                const double p = mdp.p(s, a, s2);
                if (p == 0.0) continue;  // 0 log 0 := 0
                const double q = p_theta[row * S + s2];
                if (q == 0.0) return {std::numeric_limits<double>::infinity(), mse};
                kl += p * std::log(p / q);
            }
            const double dr = theta.model_rewards[row] - mdp.r(s, a);
            mse += dr * dr;
        }
    }
    const double denom = static_cast<double>(S) * A;
    return {std::max(kl, 0.0) / denom, mse / denom};
}

TabularThetaGrad mle_tabular_gradient(const TabularMDP& mdp, const TabularModelParams& theta) {
    const int S = mdp.n_states;
    const int A = mdp.n_actions;
    auto p_theta = theta.dynamics();
    const double denom = static_cast<double>(S) * A;
    TabularThetaGrad g;
    g.d_logits.resize(theta.logits.size());
    g.d_rewards.resize(theta.model_rewards.size());
    for (size_t row = 0; row < static_cast<size_t>(S) * A; ++row) {
        for (int s2 = 0; s2 < S; ++s2) {
            // d avgKL / d logit = (p_theta - p) / (S A)
            g.d_logits[row * S + s2] =
                (p_theta[row * S + s2] - mdp.transitions[row * S + s2]) / denom;
        }
        g.d_rewards[row] = 2.0 * (theta.model_rewards[row] - mdp.rewards[row]) / denom;
    }
    return g;
}

TabularTrainResult train_tabular(const TabularMDP& mdp, TabularAgentKind kind,
                                 const TabularTrainOptions& options) {
    if (options.steps < 1) throw std::invalid_argument("train_tabular: steps must be >= 1");
    if (!(options.learning_rate > 0.0)) {
        throw std::invalid_argument("train_tabular: learning_rate must be positive");
    }
    const int S = mdp.n_states;
    const int A = mdp.n_actions;

    auto init_rng = make_rng(options.seed, "tabular_theta_init");
    std::normal_distribution<double> init(0.0, options.init_sigma);
    TabularModelParams theta;
    theta.n_states = S;
    theta.n_actions = A;
    theta.logits.resize(static_cast<size_t>(S) * A * S);
    theta.model_rewards.resize(static_cast<size_t>(S) * A);
    for (double& v : theta.logits) v = init(init_rng);
    for (double& v : theta.model_rewards) v = init(init_rng);
    theta = project_norm_ball(std::move(theta), options.kappa);

    auto noise_rng = make_rng(options.seed, "tabular_train_noise");
    std::normal_distribution<double> noise(0.0, 1.0);

    TabularTrainResult result;
    result.j_curve.reserve(options.steps + 1);
    result.kl_curve.reserve(options.steps + 1);

    QTable q = QTable::zeros(S, A);
    for (int step = 0; step < options.steps; ++step) {
        auto dyn = theta.dynamics();
        q = solve_fixed_point(dyn, theta.model_rewards, S, A, mdp.gamma, options.alpha, 1e-10,
                              100000, options.warm_start ? &q : nullptr);
        double j = expected_return(mdp, softmax_policy(q, options.alpha));
        result.j_curve.emplace_back(step, j);
        result.kl_curve.emplace_back(step, mle_tabular_loss(mdp, theta).first);
        result.norm_curve.emplace_back(step, theta.norm());

        QTable q_grad = q;
        if (options.noise_sigma > 0.0) {
            for (double& v : q_grad.values) v += options.noise_sigma * noise(noise_rng);
        }

        TabularThetaGrad grad;
        double direction = 1.0;  // ascent for the return objective
        switch (kind) {
            case TabularAgentKind::OmdReturn:
                grad = omd_return_gradient_at(mdp, theta, q_grad, options.alpha,
                                              options.use_identity_inverse);
                direction = 1.0;
                break;
            case TabularAgentKind::OmdBellman:
                grad = omd_bellman_gradient_at(mdp, theta, q_grad, options.alpha,
                                               options.use_identity_inverse);
                direction = -1.0;
                break;
            case TabularAgentKind::Mle:
                grad = mle_tabular_gradient(mdp, theta);
                direction = -1.0;
                break;
        }
        for (double v : grad.d_logits) {
            if (std::isnan(v)) {
                throw std::runtime_error("train_tabular: NaN gradient at step " +
                                         std::to_string(step));
            }
        }
        for (double v : grad.d_rewards) {
            if (std::isnan(v)) {
                throw std::runtime_error("train_tabular: NaN gradient at step " +
                                         std::to_string(step));
            }
        }
        for (size_t i = 0; i < theta.logits.size(); ++i) {
            theta.logits[i] += direction * options.learning_rate * grad.d_logits[i];
        }
        for (size_t i = 0; i < theta.model_rewards.size(); ++i) {
            theta.model_rewards[i] += direction * options.learning_rate * grad.d_rewards[i];
        }
        theta = project_norm_ball(std::move(theta), options.kappa);
    }

    auto dyn = theta.dynamics();
    q = solve_fixed_point(dyn, theta.model_rewards, S, A, mdp.gamma, options.alpha, 1e-10, 100000,
                          options.warm_start ? &q : nullptr);
    result.j_curve.emplace_back(options.steps,
                                expected_return(mdp, softmax_policy(q, options.alpha)));
    result.kl_curve.emplace_back(options.steps, mle_tabular_loss(mdp, theta).first);
    result.norm_curve.emplace_back(options.steps, theta.norm());
    result.theta_final = std::move(theta);
    result.q_final = std::move(q);
    return result;
}

}  // namespace omd
