#include "omd/agent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "omd/rng.hpp"

namespace omd {

namespace ad2 = ::omd::ad;

QNetworkPair QNetworkPair::create(const MlpSpec& spec, double ema_tau, bool double_q,
                                  uint64_t seed) {
    QNetworkPair q;
    q.spec = spec;
    q.ema_tau = ema_tau;
    q.double_q = double_q;
    auto rng1 = make_rng(seed, "q1_init");
    auto rng2 = make_rng(seed, "q2_init");
    q.w1 = init_mlp_params(spec, rng1);
    q.w2 = init_mlp_params(spec, rng2);
    q.t1 = q.w1;
    q.t2 = q.w2;
    return q;
}

void QNetworkPair::ema_update() {
    for (size_t i = 0; i < w1.size(); ++i) t1[i] = (1.0 - ema_tau) * t1[i] + ema_tau * w1[i];
    for (size_t i = 0; i < w2.size(); ++i) t2[i] = (1.0 - ema_tau) * t2[i] + ema_tau * w2[i];
}

ModelNetworks ModelNetworks::create(int state_dim, int n_actions, int hidden, uint64_t seed) {
    ModelNetworks m;
    m.dyn_spec = MlpSpec{state_dim + n_actions, state_dim, {hidden, hidden}};
    m.rew_spec = MlpSpec{state_dim + n_actions, 1, {hidden, hidden}};
    auto rng1 = make_rng(seed, "dyn_init");
    auto rng2 = make_rng(seed, "rew_init");
    m.dyn = init_mlp_params(m.dyn_spec, rng1);
    m.rew = init_mlp_params(m.rew_spec, rng2);
    return m;
}

VepSets VepSets::create(int state_dim, int n_value_fns, int hidden, uint64_t seed) {
    VepSets sets;
    sets.value_spec = MlpSpec{state_dim, 1, {hidden, hidden}};
    for (int i = 0; i < n_value_fns; ++i) {
        auto rng = make_rng(seed, "vep_value_" + std::to_string(i));
        sets.value_params.push_back(init_mlp_params(sets.value_spec, rng));
    }
    return sets;
}

namespace {

// (state, one-hot action) rows for the model networks.
ad2::Tensor sa_input_tensor(const Batch& b, int n_actions) {
    const int in = b.dim + n_actions;
    std::vector<double> data(static_cast<size_t>(b.size) * in, 0.0);
    for (int i = 0; i < b.size; ++i) {
        double* row = data.data() + static_cast<size_t>(i) * in;
        std::copy(b.states.begin() + static_cast<size_t>(i) * b.dim,
                  b.states.begin() + static_cast<size_t>(i + 1) * b.dim, row);
        row[b.dim + b.actions[i]] = 1.0;
    }
    return ad2::Tensor::matrix(b.size, in, std::move(data));
}

struct InnerGraph {
    ad2::Var loss = -1;
    ad2::Var w1 = -1, w2 = -1;
    ad2::Var dyn = -1, rew = -1;
};

// L(theta, w): model-generated targets through the EMA target nets.
InnerGraph build_inner_loss(ad2::Tape& t, const ModelNetworks& model, const QNetworkPair& q,
                            const Batch& b, double alpha, double gamma) {
    InnerGraph g;
    const int n_actions = q.spec.output_dim;
    g.dyn = t.leaf(ad2::Tensor::vector(model.dyn));
    g.rew = t.leaf(ad2::Tensor::vector(model.rew));
    g.w1 = t.leaf(ad2::Tensor::vector(q.w1));
    if (q.double_q) g.w2 = t.leaf(ad2::Tensor::vector(q.w2));

    ad2::Var sa = t.leaf(sa_input_tensor(b, n_actions));
    ad2::Var next_state = mlp_forward(t, g.dyn, model.dyn_spec, sa);
    ad2::Var r_model = t.reshape(mlp_forward(t, g.rew, model.rew_spec, sa), {b.size});

    ad2::Var qt1 = mlp_forward(t, t.leaf(ad2::Tensor::vector(q.t1)), q.spec, next_state);
    ad2::Var q_boot = qt1;
    if (q.double_q) {
        ad2::Var qt2 = mlp_forward(t, t.leaf(ad2::Tensor::vector(q.t2)), q.spec, next_state);
        q_boot = t.minimum(qt1, qt2);
    }
    ad2::Var v = t.logsumexp_rows(q_boot, alpha);
    ad2::Var target = t.add(r_model, t.scale(v, gamma));

    ad2::Var states = t.leaf(ad2::Tensor::matrix(b.size, b.dim, b.states));
    ad2::Var q1_sa = t.gather_cols(mlp_forward(t, g.w1, q.spec, states), b.actions);
    ad2::Var d1 = t.sub(q1_sa, target);
    ad2::Var loss = t.scale(t.sum_all(t.mul(d1, d1)), 1.0 / b.size);
    if (q.double_q) {
        ad2::Var q2_sa = t.gather_cols(mlp_forward(t, g.w2, q.spec, states), b.actions);
        ad2::Var d2 = t.sub(q2_sa, target);
        loss = t.add(loss, t.scale(t.sum_all(t.mul(d2, d2)), 1.0 / b.size));
    }
    g.loss = loss;
    return g;
}

struct OuterGraph {
    ad2::Var loss = -1;
    ad2::Var w1 = -1, w2 = -1;
};

// L_true(w): targets from real transitions; done zeroes the bootstrap.
OuterGraph build_outer_loss(ad2::Tape& t, const QNetworkPair& q, const Batch& b, double alpha,
                            double gamma) {
    OuterGraph g;
    g.w1 = t.leaf(ad2::Tensor::vector(q.w1));
    if (q.double_q) g.w2 = t.leaf(ad2::Tensor::vector(q.w2));

    ad2::Var next_states = t.leaf(ad2::Tensor::matrix(b.size, b.dim, b.next_states));
    ad2::Var qt1 = mlp_forward(t, t.leaf(ad2::Tensor::vector(q.t1)), q.spec, next_states);
    ad2::Var q_boot = qt1;
    if (q.double_q) {
        ad2::Var qt2 = mlp_forward(t, t.leaf(ad2::Tensor::vector(q.t2)), q.spec, next_states);
        q_boot = t.minimum(qt1, qt2);
    }
    ad2::Var v = t.logsumexp_rows(q_boot, alpha);

    std::vector<double> notdone(b.size);
    for (int i = 0; i < b.size; ++i) notdone[i] = b.done[i] ? 0.0 : 1.0;
    ad2::Var target = t.add(t.leaf(ad2::Tensor::vector(b.rewards)),
                            t.mul(t.scale(v, gamma), t.leaf(ad2::Tensor::vector(notdone))));

    ad2::Var states = t.leaf(ad2::Tensor::matrix(b.size, b.dim, b.states));
    ad2::Var q1_sa = t.gather_cols(mlp_forward(t, g.w1, q.spec, states), b.actions);
    ad2::Var d1 = t.sub(q1_sa, target);
    ad2::Var loss = t.scale(t.sum_all(t.mul(d1, d1)), 1.0 / b.size);
    if (q.double_q) {
        ad2::Var q2_sa = t.gather_cols(mlp_forward(t, g.w2, q.spec, states), b.actions);
        ad2::Var d2 = t.sub(q2_sa, target);
        loss = t.add(loss, t.scale(t.sum_all(t.mul(d2, d2)), 1.0 / b.size));
    }
    g.loss = loss;
    return g;
}

}  // namespace

double inner_loss(const ModelNetworks& model, const QNetworkPair& q, const Batch& batch,
                  double alpha, double gamma) {
    ad2::Tape t;
    return t.value(build_inner_loss(t, model, q, batch, alpha, gamma).loss).scalar_value();
}

double outer_loss(const QNetworkPair& q, const Batch& batch, double alpha, double gamma) {
    ad2::Tape t;
    return t.value(build_outer_loss(t, q, batch, alpha, gamma).loss).scalar_value();
}

ModelGrad omd_model_gradient(const ModelNetworks& model, const QNetworkPair& q,
                             const Batch& model_batch, const Batch& real_batch, double alpha,
                             double gamma, const OmdGradConfig& config, double* inner_out,
                             double* outer_out) {
    // Cotangent v = dL_true/dw from the real-transition loss.
    ad2::Tape t_outer;
    OuterGraph og = build_outer_loss(t_outer, q, real_batch, alpha, gamma);
    if (outer_out) *outer_out = t_outer.value(og.loss).scalar_value();
    std::vector<ad2::Var> outer_wvars = {og.w1};
    if (q.double_q) outer_wvars.push_back(og.w2);
    std::vector<ad2::Var> gv = t_outer.gradients(og.loss, outer_wvars);
    std::vector<std::vector<double>> v;
    for (ad2::Var g : gv) v.push_back(t_outer.value(g).data);

    // Inner loss at the current w.
    ad2::Tape t;
    InnerGraph ig = build_inner_loss(t, model, q, model_batch, alpha, gamma);
    if (inner_out) *inner_out = t.value(ig.loss).scalar_value();
    std::vector<ad2::Var> w_vars = {ig.w1};
    if (q.double_q) w_vars.push_back(ig.w2);
    std::vector<ad2::Var> g_w = t.gradients(ig.loss, w_vars);

    if (!config.use_identity_inverse) {
        // v <- (d2L/dw2)^-1 v via matrix-free CG on the inner Hessian.
        std::vector<double> flat;
        for (const auto& part : v) flat.insert(flat.end(), part.begin(), part.end());
        auto hvp = [&](const std::vector<double>& x) {
            ad2::Var s = -1;
            size_t off = 0;
            for (size_t i = 0; i < w_vars.size(); ++i) {
                const size_t n = t.value(w_vars[i]).size();
                std::vector<double> part(x.begin() + off, x.begin() + off + n);
                off += n;
                ad2::Var term = t.sum_all(
                    t.mul(g_w[i], t.leaf(ad2::Tensor::vector(std::move(part)))));
                s = s < 0 ? term : t.add(s, term);
            }
            std::vector<ad2::Var> hg = t.gradients(s, w_vars);
            std::vector<double> result;
            for (ad2::Var g : hg) {
                const auto& d = t.value(g).data;
                result.insert(result.end(), d.begin(), d.end());
            }
            return result;
        };
        ad2::CgResult res =
            ad2::conjugate_gradient(hvp, flat, config.cg_tol, config.cg_max_iter);
        // Non-convergence within the budget is tolerated: the CG iterate is
        // still a descent-improving preconditioned cotangent.
        size_t off = 0;
        for (auto& part : v) {
            std::copy(res.x.begin() + off, res.x.begin() + off + part.size(), part.begin());
            off += part.size();
        }
    }

    // grad_theta = -(v . d2L / dtheta dw)
    ad2::Var s = -1;
    for (size_t i = 0; i < w_vars.size(); ++i) {
        ad2::Var term = t.sum_all(t.mul(g_w[i], t.leaf(ad2::Tensor::vector(v[i]))));
        s = s < 0 ? term : t.add(s, term);
    }
    std::vector<ad2::Var> theta_grads = t.gradients(s, {ig.dyn, ig.rew});
    ModelGrad grad;
    grad.d_dyn = t.value(theta_grads[0]).data;
    grad.d_rew = t.value(theta_grads[1]).data;
    for (double& x : grad.d_dyn) x = -x;
    for (double& x : grad.d_rew) x = -x;
    return grad;
}

ModelGrad mle_model_gradient(const ModelNetworks& model, const Batch& real_batch,
                             double* dyn_loss, double* rew_loss) {
    ad2::Tape t;
    const int n_actions = model.dyn_spec.input_dim - model.dyn_spec.output_dim;
    ad2::Var dyn = t.leaf(ad2::Tensor::vector(model.dyn));
    ad2::Var rew = t.leaf(ad2::Tensor::vector(model.rew));
    ad2::Var sa = t.leaf(sa_input_tensor(real_batch, n_actions));

    ad2::Var pred = mlp_forward(t, dyn, model.dyn_spec, sa);
    ad2::Var d = t.sub(pred, t.leaf(ad2::Tensor::matrix(real_batch.size, real_batch.dim,
                                                        real_batch.next_states)));
    ad2::Var l_dyn = t.scale(t.sum_all(t.mul(d, d)), 1.0 / real_batch.size);

    ad2::Var r_pred = t.reshape(mlp_forward(t, rew, model.rew_spec, sa), {real_batch.size});
    ad2::Var dr = t.sub(r_pred, t.leaf(ad2::Tensor::vector(real_batch.rewards)));
    ad2::Var l_rew = t.scale(t.sum_all(t.mul(dr, dr)), 1.0 / real_batch.size);

    if (dyn_loss) *dyn_loss = t.value(l_dyn).scalar_value();
    if (rew_loss) *rew_loss = t.value(l_rew).scalar_value();

    std::vector<ad2::Var> grads = t.gradients(t.add(l_dyn, l_rew), {dyn, rew});
    return ModelGrad{t.value(grads[0]).data, t.value(grads[1]).data};
}

namespace {

ad2::Var build_vep_loss(ad2::Tape& t, const ModelNetworks& model, const Batch& b,
                        const VepSets& sets, double gamma, ad2::Var& dyn_var,
                        ad2::Var& rew_var) {
    const int n_actions = model.dyn_spec.input_dim - model.dyn_spec.output_dim;
    dyn_var = t.leaf(ad2::Tensor::vector(model.dyn));
    rew_var = t.leaf(ad2::Tensor::vector(model.rew));
    ad2::Var sa = t.leaf(sa_input_tensor(b, n_actions));
    ad2::Var next_pred = mlp_forward(t, dyn_var, model.dyn_spec, sa);
    ad2::Var r_pred = t.reshape(mlp_forward(t, rew_var, model.rew_spec, sa), {b.size});

    ad2::Var loss = -1;
    for (const auto& vp : sets.value_params) {
        // Real side: sampled Bellman backup r + gamma V(s'), a constant.
        std::vector<double> target(b.size);
        for (int i = 0; i < b.size; ++i) {
            std::span<const double> s2(b.next_states.data() + static_cast<size_t>(i) * b.dim,
                                       b.dim);
            target[i] = b.rewards[i] + gamma * mlp_forward_plain(vp, sets.value_spec, s2)[0];
        }
        // Model side: r_theta + gamma V(f_theta), differentiable.
        ad2::Var v_model = t.reshape(
            mlp_forward(t, t.leaf(ad2::Tensor::vector(vp)), sets.value_spec, next_pred),
            {b.size});
        ad2::Var m = t.add(r_pred, t.scale(v_model, gamma));
        ad2::Var d = t.sub(m, t.leaf(ad2::Tensor::vector(std::move(target))));
        ad2::Var term = t.sum_all(t.mul(d, d));
        loss = loss < 0 ? term : t.add(loss, term);
    }
    const double norm = 1.0 / (static_cast<double>(b.size) * sets.value_params.size());
    return t.scale(loss, norm);
}

}  // namespace

double vep_model_loss(const ModelNetworks& model, const Batch& real_batch, const VepSets& sets,
                      double gamma) {
    if (sets.value_params.empty()) throw std::invalid_argument("vep_model_loss: empty value set");
    ad2::Tape t;
    ad2::Var dyn_var, rew_var;
    return t.value(build_vep_loss(t, model, real_batch, sets, gamma, dyn_var, rew_var))
        .scalar_value();
}

ModelGrad vep_model_gradient(const ModelNetworks& model, const Batch& real_batch,
                             const VepSets& sets, double gamma, double* loss_out) {
    if (sets.value_params.empty()) {
        throw std::invalid_argument("vep_model_gradient: empty value set");
    }
    ad2::Tape t;
    ad2::Var dyn_var, rew_var;
    ad2::Var loss = build_vep_loss(t, model, real_batch, sets, gamma, dyn_var, rew_var);
    if (loss_out) *loss_out = t.value(loss).scalar_value();
    std::vector<ad2::Var> grads = t.gradients(loss, {dyn_var, rew_var});
    return ModelGrad{t.value(grads[0]).data, t.value(grads[1]).data};
}

int act(const QNetworkPair& q, std::span<const double> state, ExploreMode mode, double param,
        std::mt19937_64& rng) {
    const int n_actions = q.spec.output_dim;
    if (mode == ExploreMode::EpsilonGreedy) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        if (u(rng) < param) {
            std::uniform_int_distribution<int> pick(0, n_actions - 1);
            return pick(rng);
        }
        mode = ExploreMode::Greedy;
    }
    std::vector<double> qs = mlp_forward_plain(q.w1, q.spec, state);
    if (mode == ExploreMode::Greedy) {
        int best = 0;
        for (int a = 1; a < n_actions; ++a) {
            if (qs[a] > qs[best]) best = a;
        }
        return best;
    }
    // Softmax with temperature `param`.
    double m = qs[0];
    for (double v : qs) m = std::max(m, v);
    std::vector<double> w(n_actions);
    double sum = 0.0;
    for (int a = 0; a < n_actions; ++a) {
        w[a] = std::exp((qs[a] - m) / param);
        sum += w[a];
    }
    std::uniform_real_distribution<double> u(0.0, sum);
    double r = u(rng);
    for (int a = 0; a < n_actions; ++a) {
        r -= w[a];
        if (r <= 0.0) return a;
    }
    return n_actions - 1;
}

double model_mse(const ModelNetworks& model, const std::vector<Transition>& transitions) {
    if (transitions.empty()) throw std::invalid_argument("model_mse: empty transition set");
    double total = 0.0;
    std::vector<double> input(model.dyn_spec.input_dim);
    for (const Transition& tr : transitions) {
        std::fill(input.begin(), input.end(), 0.0);
        std::copy(tr.state.begin(), tr.state.end(), input.begin());
        input[tr.state.size() + tr.action] = 1.0;
        std::vector<double> pred = mlp_forward_plain(model.dyn, model.dyn_spec, input);
        double e = 0.0;
        for (size_t i = 0; i < pred.size(); ++i) {
            const double d = pred[i] - tr.next_state[i];
            e += d * d;
        }
        total += e;
    }
    return total / static_cast<double>(transitions.size());
}

namespace {

struct EvalResult {
    double mean = 0.0;
    double stderr_ = 0.0;
    std::vector<Transition> transitions;
};

EvalResult evaluate(Env& env, const QNetworkPair& q, int episodes) {
    EvalResult res;
    std::vector<double> returns;
    std::mt19937_64 dummy(0);  // greedy acting draws nothing
    for (int e = 0; e < episodes; ++e) {
        std::vector<double> s = env.reset();
        double ret = 0.0;
        bool done = false;
        while (!done) {
            const int a = act(q, s, ExploreMode::Greedy, 0.0, dummy);
            StepResult r = env.step(a);
            res.transitions.push_back(Transition{s, a, r.reward, r.state, r.done});
            ret += r.reward;
            s = r.state;
            done = r.done;
        }
        returns.push_back(ret);
    }
    double sum = 0.0;
    for (double r : returns) sum += r;
    res.mean = sum / returns.size();
    double var = 0.0;
    for (double r : returns) var += (r - res.mean) * (r - res.mean);
    if (returns.size() > 1) {
        var /= static_cast<double>(returns.size() - 1);
        res.stderr_ = std::sqrt(var / static_cast<double>(returns.size()));
    }
    return res;
}

}  // namespace

TrainOutput train_agent(const EnvFactory& factory, AgentKind kind, const AgentConfig& config,
                        uint64_t seed) {
    std::unique_ptr<Env> env = factory(derive_seed(seed, "train_env"));
    std::unique_ptr<Env> eval_env = factory(derive_seed(seed, "eval_env"));
    const int state_dim = env->state_dim();
    const int n_actions = env->n_actions();

    MlpSpec q_spec{state_dim, n_actions, {config.q_hidden, config.q_hidden}};
    TrainOutput out;
    out.q = QNetworkPair::create(q_spec, config.ema_tau, config.double_q, seed);
    out.model = ModelNetworks::create(state_dim, n_actions, config.model_hidden, seed);
    VepSets vep;
    if (kind == AgentKind::Vep) {
        vep = VepSets::create(state_dim, config.vep_value_fns, config.q_hidden,
                              derive_seed(seed, "vep"));
    }

    Adam adam_w1(out.q.w1.size(), config.lr_w);
    Adam adam_w2(out.q.w2.size(), config.lr_w);
    Adam adam_dyn(out.model.dyn.size(), config.lr_theta);
    Adam adam_rew(out.model.rew.size(), config.lr_theta);

    ReplayBuffer buffer(config.buffer_capacity, derive_seed(seed, "buffer"));
    auto explore_rng = make_rng(seed, "explore");

    OmdGradConfig omd_cfg{config.use_identity_inverse, config.cg_tol, config.cg_max_iter};

    ad2::Tape inner_tape;
    double last_inner = std::numeric_limits<double>::quiet_NaN();
    double last_outer = std::numeric_limits<double>::quiet_NaN();

    std::vector<double> s = env->reset();
    for (int step = 1; step <= config.total_steps; ++step) {
        const int a = act(out.q, s, config.explore,
                          config.explore == ExploreMode::Softmax ? config.alpha : config.epsilon,
                          explore_rng);
        StepResult r = env->step(a);
        buffer.add(Transition{s, a, r.reward, r.state, r.done});
        s = r.done ? env->reset() : r.state;

        if (static_cast<int>(buffer.size()) >= std::max(config.warmup_steps, config.batch_size)) {
            for (int k = 0; k < config.k_inner; ++k) {
                Batch batch = buffer.sample(config.batch_size);
                inner_tape.reset();
                InnerGraph ig =
                    build_inner_loss(inner_tape, out.model, out.q, batch, config.alpha,
                                     config.gamma);
                last_inner = inner_tape.value(ig.loss).scalar_value();
                std::vector<ad2::Var> w_vars = {ig.w1};
                if (config.double_q) w_vars.push_back(ig.w2);
                std::vector<ad2::Var> grads = inner_tape.gradients(ig.loss, w_vars);
                adam_w1.step(out.q.w1, inner_tape.value(grads[0]).data);
                if (config.double_q) adam_w2.step(out.q.w2, inner_tape.value(grads[1]).data);
                out.q.ema_update();
            }

            Batch real = buffer.sample(config.batch_size);
            ModelGrad mg;
            switch (kind) {
                case AgentKind::Omd:
                    // The sampled batch serves both roles: its (s,a) feed the
                    // inner loss, the full transitions feed L_true.
                    mg = omd_model_gradient(out.model, out.q, real, real, config.alpha,
                                            config.gamma, omd_cfg, &last_inner, &last_outer);
                    break;
                case AgentKind::Mle: {
                    double dl = 0.0, rl = 0.0;
                    mg = mle_model_gradient(out.model, real, &dl, &rl);
                    last_outer = outer_loss(out.q, real, config.alpha, config.gamma);
                    break;
                }
                case AgentKind::Vep: {
                    double vl = 0.0;
                    mg = vep_model_gradient(out.model, real, vep, config.gamma, &vl);
                    last_outer = outer_loss(out.q, real, config.alpha, config.gamma);
                    break;
                }
            }
            adam_dyn.step(out.model.dyn, mg.d_dyn);
            adam_rew.step(out.model.rew, mg.d_rew);

            if (!std::isfinite(last_inner) || !std::isfinite(last_outer)) {
                out.diverged = true;
            }
        }

        if (out.diverged) {
            RunRow row;
            row.step = step;
            row.eval_return_mean = std::numeric_limits<double>::quiet_NaN();
            row.eval_return_stderr = 0.0;
            row.model_mse = std::numeric_limits<double>::quiet_NaN();
            row.inner_loss = last_inner;
            row.outer_loss = last_outer;
            out.rows.push_back(row);
            break;
        }
        if (step % config.eval_interval == 0 || step == config.total_steps) {
            EvalResult ev = evaluate(*eval_env, out.q, config.eval_episodes);
            RunRow row;
            row.step = step;
            row.eval_return_mean = ev.mean;
            row.eval_return_stderr = ev.stderr_;
            row.model_mse = model_mse(out.model, ev.transitions);
            row.inner_loss = last_inner;
            row.outer_loss = last_outer;
            out.rows.push_back(row);
        }
    }
    return out;
}

}  // namespace omd
