#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "omd/autodiff.hpp"
#include "omd/generators.hpp"
#include "omd/mdp.hpp"
#include "omd/tabular.hpp"

using namespace omd;
using namespace omd::ad;

namespace {

std::vector<double> random_vec(size_t n, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> d(0.0, scale);
    std::vector<double> v(n);
    for (double& x : v) x = d(rng);
    return v;
}

// Central finite differences of a scalar function of a flat vector.
std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                std::vector<double> x, double h = 1e-5) {
    std::vector<double> g(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + h;
        const double hi = f(x);
        x[i] = orig - h;
        const double lo = f(x);
        x[i] = orig;
        g[i] = (hi - lo) / (2.0 * h);
    }
    return g;
}

void check_close(const std::vector<double>& a, const std::vector<double>& b, double rel) {
    REQUIRE(a.size() == b.size());
    double scale = 1e-10;
    for (size_t i = 0; i < a.size(); ++i) {
        scale = std::max({scale, std::fabs(a[i]), std::fabs(b[i])});
    }
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(std::fabs(a[i] - b[i]) <= rel * scale + 1e-12);
    }
}

}  // namespace

TEST_CASE("vjp of identity is the cotangent") {
    Tape t;
    Var x = t.leaf(Tensor::vector({1.0, -2.0, 3.0}));
    Tensor cot = Tensor::vector({5.0, 7.0, -1.0});
    auto g = t.gradients(x, {x}, &cot);
    CHECK(t.value(g[0]).data == cot.data);
}

TEST_CASE("logsumexp gradient is the softmax") {
    Tape t;
    std::vector<double> xs = {0.3, -1.2, 2.0, 0.5};
    Var x = t.leaf(Tensor::matrix(1, 4, xs));
    Var l = t.sum_all(t.logsumexp_rows(x, 1.0));
    auto g = t.gradients(l, {x});

    double m = *std::max_element(xs.begin(), xs.end());
    double z = 0.0;
    for (double v : xs) z += std::exp(v - m);
    std::vector<double> expected;
    for (double v : xs) expected.push_back(std::exp(v - m) / z);
    check_close(t.value(g[0]).data, expected, 1e-12);

    auto f = [](const std::vector<double>& v) {
        Tape tt;
        return tt.value(tt.sum_all(tt.logsumexp_rows(tt.leaf(Tensor::matrix(1, 4, v)), 1.0)))
            .scalar_value();
    };
    check_close(t.value(g[0]).data, fd_gradient(f, xs), 1e-6);
}

TEST_CASE("registered ops match finite differences through a composition") {
    std::mt19937_64 rng(1234);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 6;
        std::vector<double> xs = random_vec(n, rng, 0.8);
        for (double& v : xs) v = 0.5 + std::fabs(v);  // keep log/div away from 0

        auto build = [&](Tape& t, const std::vector<double>& v) {
            Var x = t.leaf(Tensor::vector(v));
            Var a = t.slice(x, 0, 3);
            Var b = t.slice(x, 3, 3);
            Var m = t.matmul(t.reshape(a, {1, 3}), t.reshape(b, {3, 1}));  // [1,1]
            Var mm = t.reshape(m, {1});
            Var c = t.exp(t.scale(mm, 0.3));
            Var d = t.log(t.add(c, t.leaf(Tensor::vector({1.0}))));
            Var e = t.minimum(a, b);
            Var r = t.relu(t.sub(a, b));
            Var grid = t.matmul(t.reshape(a, {3, 1}), t.reshape(b, {1, 3}));  // [3,3]
            Var lse = t.logsumexp_rows(grid, 0.7);
            Var gathered = t.gather_cols(grid, {2, 0, 1});
            Var total = t.add(t.sum_all(t.div(e, t.add_scalar(r, 2.0))), t.sum_all(d));
            total = t.add(total, t.sum_all(lse));
            total = t.add(total, t.sum_all(t.mul(gathered, gathered)));
            total = t.add(total, t.sum_all(t.sum_cols(grid)));
            return std::make_pair(x, total);
        };
        Tape t;
        auto [x, out] = build(t, xs);
        auto g = t.gradients(out, {x});
        auto fd = fd_gradient(
            [&](const std::vector<double>& v) {
                Tape tt;
                return tt.value(build(tt, v).second).scalar_value();
            },
            xs);
        check_close(t.value(g[0]).data, fd, 1e-4);
    }
}

TEST_CASE("mixed second order: quadratic, independent, bilinear") {
    // L = (w - theta)^2, v = 3: result = -2 v = -6.
    {
        Tape t;
        Var th = t.leaf(Tensor::vector({0.2}));
        Var w = t.leaf(Tensor::vector({0.5}));
        Var d = t.sub(w, th);
        Var loss = t.sum_all(t.mul(d, d));
        auto r = mixed_second_order_product(t, loss, {th}, {w}, {Tensor::vector({3.0})});
        CHECK(r[0].data[0] == doctest::Approx(-6.0).epsilon(1e-10));
    }
    // L independent of theta: zero vector.
    {
        Tape t;
        Var th = t.leaf(Tensor::vector({0.7, -0.3}));
        Var w = t.leaf(Tensor::vector({0.5, 1.0}));
        Var loss = t.sum_all(t.mul(w, w));
        auto r = mixed_second_order_product(t, loss, {th}, {w}, {Tensor::vector({1.0, 2.0})});
        CHECK(r[0].data[0] == 0.0);
        CHECK(r[0].data[1] == 0.0);
    }
    // L = w^T A theta: result = A^T v.
    {
        std::mt19937_64 rng(7);
        std::vector<double> a_data = random_vec(6, rng);
        std::vector<double> v_data = random_vec(2, rng);
        Tape t;
        Var th = t.leaf(Tensor::vector(random_vec(3, rng)));
        Var w = t.leaf(Tensor::vector(random_vec(2, rng)));
        Var a = t.leaf(Tensor::matrix(2, 3, a_data));
        Var loss = t.sum_all(t.mul(w, t.reshape(t.matmul(a, t.reshape(th, {3, 1})), {2})));
        auto r = mixed_second_order_product(t, loss, {th}, {w}, {Tensor::vector(v_data)});
        for (int j = 0; j < 3; ++j) {
            double expect = 0.0;
            for (int i = 0; i < 2; ++i) expect += a_data[i * 3 + j] * v_data[i];
            CHECK(r[0].data[j] == doctest::Approx(expect).epsilon(1e-10));
        }
    }
}

TEST_CASE("mixed second order probing is symmetric across routes") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> th0 = random_vec(3, rng, 0.5);
        std::vector<double> w0 = random_vec(3, rng, 0.5);
        std::vector<double> u = random_vec(3, rng);
        std::vector<double> v = random_vec(3, rng);
        auto build = [&](Tape& t, Var& th, Var& w) {
            th = t.leaf(Tensor::vector(th0));
            w = t.leaf(Tensor::vector(w0));
            Var p = t.exp(t.scale(t.mul(th, w), 0.3));
            Var s = t.add(th, w);
            return t.add(t.sum_all(p), t.sum_all(t.mul(s, s)));
        };
        Tape t1;
        Var th1, w1;
        Var l1 = build(t1, th1, w1);
        auto r1 = mixed_second_order_product(t1, l1, {th1}, {w1}, {Tensor::vector(v)});
        double route_theta = 0.0;
        for (int i = 0; i < 3; ++i) route_theta += u[i] * r1[0].data[i];

        Tape t2;
        Var th2, w2;
        Var l2 = build(t2, th2, w2);
        auto r2 = mixed_second_order_product(t2, l2, {w2}, {th2}, {Tensor::vector(u)});
        double route_w = 0.0;
        for (int i = 0; i < 3; ++i) route_w += v[i] * r2[0].data[i];
        CHECK(route_theta == doctest::Approx(route_w).epsilon(1e-6));
    }
}

TEST_CASE("conjugate gradient examples") {
    {
        auto mv = [](const std::vector<double>& x) { return x; };
        CgResult r = conjugate_gradient(mv, {1.0, 2.0, 3.0}, 1e-12, 10);
        CHECK(r.converged);
        CHECK(r.iterations == 1);
        check_close(r.x, {1.0, 2.0, 3.0}, 1e-12);
    }
    {
        auto mv = [](const std::vector<double>& x) {
            return std::vector<double>{x[0], 2.0 * x[1], 4.0 * x[2]};
        };
        CgResult r = conjugate_gradient(mv, {1.0, 1.0, 1.0}, 1e-12, 10);
        CHECK(r.converged);
        check_close(r.x, {1.0, 0.5, 0.25}, 1e-10);
    }
    {
        std::mt19937_64 rng(5);
        const int n = 8;
        std::vector<double> m = random_vec(n * n, rng);
        std::vector<double> spd(n * n, 0.0);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                for (int k = 0; k < n; ++k) spd[i * n + j] += m[k * n + i] * m[k * n + j];
            }
            spd[i * n + i] += 1.0;
        }
        std::vector<double> b = random_vec(n, rng);
        auto mv = [&](const std::vector<double>& x) {
            std::vector<double> y(n, 0.0);
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) y[i] += spd[i * n + j] * x[j];
            }
            return y;
        };
        CgResult r = conjugate_gradient(mv, b, 1e-12, 100);
        CHECK(r.converged);
        // Gauss-Jordan oracle, independent of the library code paths.
        std::vector<double> a = spd;
        std::vector<double> x = b;
        for (int col = 0; col < n; ++col) {
            int piv = col;
            for (int i = col + 1; i < n; ++i) {
                if (std::fabs(a[i * n + col]) > std::fabs(a[piv * n + col])) piv = i;
            }
            for (int j = 0; j < n; ++j) std::swap(a[col * n + j], a[piv * n + j]);
            std::swap(x[col], x[piv]);
            const double d = a[col * n + col];
            for (int j = 0; j < n; ++j) a[col * n + j] /= d;
            x[col] /= d;
            for (int i = 0; i < n; ++i) {
                if (i == col) continue;
                const double f = a[i * n + col];
                if (f == 0.0) continue;
                for (int j = 0; j < n; ++j) a[i * n + j] -= f * a[col * n + j];
                x[i] -= f * x[col];
            }
        }
        check_close(r.x, x, 1e-8);
    }
}

TEST_CASE("conjugate gradient breakdown raises a solver error") {
    auto mv = [](const std::vector<double>& x) { return std::vector<double>(x.size(), 0.0); };
    CHECK_THROWS_AS(conjugate_gradient(mv, {1.0, 1.0}, 1e-10, 5), SolverError);
}

namespace {

SolverFn linear_solver(double a) {
    // solves w = theta + a w  =>  w = theta / (1 - a)
    return [a](const Tensor& theta, const Tensor&) {
        Tensor w = theta;
        for (double& v : w.data) v /= (1.0 - a);
        return w;
    };
}

}  // namespace

TEST_CASE("root_solve: identity map fixed point") {
    for (bool identity : {false, true}) {
        Tape t;
        Var theta = t.leaf(Tensor::vector({1.5, -2.0}));
        ResidualFn f = [](Tape& tt, Var th, Var w) { return tt.sub(w, th); };
        RootSolveConfig cfg;
        cfg.use_identity_inverse = identity;
        Var w = t.root_solve(f, theta, Tensor::vector({0.0, 0.0}), linear_solver(0.0), cfg);
        CHECK(t.value(w).data[0] == doctest::Approx(1.5));
        Var loss = t.sum_all(t.mul(w, t.leaf(Tensor::vector({1.0, 2.0}))));
        auto g = t.gradients(loss, {theta});
        check_close(t.value(g[0]).data, {1.0, 2.0}, 1e-10);
    }
}

TEST_CASE("root_solve: contraction fixed point, exact vs identity modes") {
    // f(theta, w) = w - (theta + 0.9 w): phi(theta) = 10 theta.
    ResidualFn f = [](Tape& tt, Var th, Var w) {
        return tt.sub(w, tt.add(th, tt.scale(w, 0.9)));
    };
    {
        Tape t;
        Var theta = t.leaf(Tensor::vector({0.4}));
        RootSolveConfig cfg;
        cfg.use_identity_inverse = false;
        Var w = t.root_solve(f, theta, Tensor::vector({0.0}), linear_solver(0.9), cfg);
        CHECK(t.value(w).data[0] == doctest::Approx(4.0).epsilon(1e-10));
        auto g = t.gradients(t.sum_all(w), {theta});
        CHECK(t.value(g[0]).data[0] == doctest::Approx(10.0).epsilon(1e-8));
    }
    {
        Tape t;
        Var theta = t.leaf(Tensor::vector({0.4}));
        RootSolveConfig cfg;
        cfg.use_identity_inverse = true;
        Var w = t.root_solve(f, theta, Tensor::vector({0.0}), linear_solver(0.9), cfg);
        auto g = t.gradients(t.sum_all(w), {theta});
        // Identity mode drops the (df/dw)^-1 = 10 factor; the gap is the
        // documented approximation.
        CHECK(t.value(g[0]).data[0] == doctest::Approx(1.0).epsilon(1e-10));
    }
}

TEST_CASE("root_solve rejects a solver that violates its contract") {
    Tape t;
    Var theta = t.leaf(Tensor::vector({1.0}));
    ResidualFn f = [](Tape& tt, Var th, Var w) { return tt.sub(w, th); };
    SolverFn bad = [](const Tensor& theta, const Tensor&) {
        Tensor w = theta;
        w.data[0] += 0.5;  // not a root
        return w;
    };
    CHECK_THROWS(t.root_solve(f, theta, Tensor::vector({0.0}), bad));
}

TEST_CASE("root_solve on the soft Bellman residual matches the tabular IFT") {
    const int S = 3, A = 2;
    const double gamma = 0.5, alpha = 0.2;
    std::mt19937_64 rng(42);
    TabularModelParams theta_params;
    theta_params.n_states = S;
    theta_params.n_actions = A;
    theta_params.logits = random_vec(S * A * S, rng, 0.7);
    theta_params.model_rewards = random_vec(S * A, rng, 0.7);

    std::vector<double> theta_flat = theta_params.logits;
    theta_flat.insert(theta_flat.end(), theta_params.model_rewards.begin(),
                      theta_params.model_rewards.end());

    ResidualFn f = [&](Tape& t, Var th, Var w) {
        Var logits = t.reshape(t.slice(th, 0, S * A * S), {S * A, S});
        Var rewards = t.slice(th, S * A * S, S * A);
        Var lse1 = t.logsumexp_rows(logits, 1.0);
        Var p = t.exp(t.sub(logits, t.broadcast_col(lse1, S)));
        Var qm = t.reshape(w, {S, A});
        Var v = t.logsumexp_rows(qm, alpha);
        Var ev = t.reshape(t.matmul(p, t.reshape(v, {S, 1})), {S * A});
        Var bq = t.add(rewards, t.scale(ev, gamma));
        return t.sub(w, bq);
    };
    SolverFn solver = [&](const Tensor& th, const Tensor&) {
        TabularModelParams tp;
        tp.n_states = S;
        tp.n_actions = A;
        tp.logits.assign(th.data.begin(), th.data.begin() + S * A * S);
        tp.model_rewards.assign(th.data.begin() + S * A * S, th.data.end());
        auto dyn = tp.dynamics();
        QTable q = solve_fixed_point(dyn, tp.model_rewards, S, A, gamma, alpha, 1e-12);
        return Tensor::vector(q.values);
    };

    Tape t;
    Var theta = t.leaf(Tensor::vector(theta_flat));
    RootSolveConfig cfg;
    cfg.use_identity_inverse = false;
    cfg.cg_tol = 1e-8;
    cfg.cg_max_iter = 2000;
    Var q_star = t.root_solve(f, theta, Tensor::zeros({S * A}), solver, cfg);

    std::mt19937_64 rng2(43);
    std::vector<double> cot = random_vec(S * A, rng2);
    Tensor cot_t = Tensor::vector(cot);
    auto g = t.gradients(q_star, {theta}, &cot_t);

    auto dyn = theta_params.dynamics();
    QTable q = solve_fixed_point(dyn, theta_params.model_rewards, S, A, gamma, alpha, 1e-12);
    IftFixedPointJacobian ift(theta_params, q, gamma, alpha);
    TabularThetaGrad expect = ift.vjp(cot);
    std::vector<double> expect_flat = expect.d_logits;
    expect_flat.insert(expect_flat.end(), expect.d_rewards.begin(), expect.d_rewards.end());
    check_close(t.value(g[0]).data, expect_flat, 1e-6);
}

TEST_CASE("identity mode equals exact mode when df/dw is the identity") {
    ResidualFn f = [](Tape& tt, Var th, Var w) { return tt.sub(w, th); };
    SolverFn solver = [](const Tensor& th, const Tensor&) { return th; };
    std::vector<double> grads[2];
    int i = 0;
    for (bool identity : {false, true}) {
        Tape t;
        Var theta = t.leaf(Tensor::vector({0.3, -1.1, 2.2}));
        RootSolveConfig cfg;
        cfg.use_identity_inverse = identity;
        Var w = t.root_solve(f, theta, Tensor::zeros({3}), solver, cfg);
        Var loss = t.sum_all(t.mul(w, w));
        grads[i++] = t.value(t.gradients(loss, {theta})[0]).data;
    }
    check_close(grads[0], grads[1], 1e-12);
}

TEST_CASE("tape reset reuses storage") {
    Tape t;
    for (int iter = 0; iter < 3; ++iter) {
        t.reset();
        Var x = t.leaf(Tensor::vector({1.0, 2.0}));
        Var y = t.sum_all(t.mul(x, x));
        CHECK(t.value(y).scalar_value() == doctest::Approx(5.0));
        auto g = t.gradients(y, {x});
        check_close(t.value(g[0]).data, {2.0, 4.0}, 1e-12);
    }
}

TEST_CASE("second order through relu uses the subgradient convention") {
    Tape t;
    Var x = t.leaf(Tensor::vector({1.5, -0.5}));
    Var r = t.relu(x);
    Var loss = t.sum_all(t.mul(r, r));
    auto g1 = t.gradients(loss, {x});
    check_close(t.value(g1[0]).data, {3.0, 0.0}, 1e-12);
    Var probe = t.sum_all(t.mul(g1[0], t.leaf(Tensor::vector({1.0, 1.0}))));
    auto g2 = t.gradients(probe, {x});
    check_close(t.value(g2[0]).data, {2.0, 0.0}, 1e-12);
}
