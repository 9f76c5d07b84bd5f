#include "omd/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace omd::ad {

namespace {

void require(bool cond, const char* what) {
    if (!cond) throw std::invalid_argument(what);
}

// C = A * B, A is m x k, B is k x n. ikj order so the inner loop is
// contiguous and vectorizes.
void matmul_kernel(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        double* ci = c + static_cast<size_t>(i) * n;
        std::fill(ci, ci + n, 0.0);
        const double* ai = a + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double av = ai[p];
            if (av == 0.0) continue;
            const double* bp = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

}  // namespace

// push() may reallocate node storage, so builders validate with short-lived
// references first, push, and only then re-acquire input references.
Var Tape::push(Op op, int a, int b) {
    if (count_ == nodes_.size()) nodes_.emplace_back();
    Node& n = nodes_[count_];
    n.op = op;
    n.a = a;
    n.b = b;
    n.attr = 0.0;
    n.i0 = 0;
    n.i1 = 0;
    n.idx.clear();
    n.saved_shape.clear();
    n.root.reset();
    return static_cast<Var>(count_++);
}

Var Tape::leaf(Tensor value) {
    Var v = push(Op::Leaf, -1, -1);
    out(v) = std::move(value);
    return v;
}

Var Tape::add(Var a, Var b) {
    require(value(a).same_shape(value(b)), "add: shape mismatch");
    Var v = push(Op::Add, a, b);
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    Tensor& o = out(v);
    o.shape = ta.shape;
    o.data.resize(ta.size());
    for (size_t i = 0; i < ta.size(); ++i) o.data[i] = ta.data[i] + tb.data[i];
    return v;
}

Var Tape::sub(Var a, Var b) {
    require(value(a).same_shape(value(b)), "sub: shape mismatch");
    Var v = push(Op::Sub, a, b);
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    Tensor& o = out(v);
    o.shape = ta.shape;
    o.data.resize(ta.size());
    for (size_t i = 0; i < ta.size(); ++i) o.data[i] = ta.data[i] - tb.data[i];
    return v;
}

Var Tape::mul(Var a, Var b) {
    require(value(a).same_shape(value(b)), "mul: shape mismatch");
    Var v = push(Op::Mul, a, b);
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    Tensor& o = out(v);
    o.shape = ta.shape;
    o.data.resize(ta.size());
    for (size_t i = 0; i < ta.size(); ++i) o.data[i] = ta.data[i] * tb.data[i];
    return v;
}

Var Tape::div(Var a, Var b) {
    require(value(a).same_shape(value(b)), "div: shape mismatch");
    Var v = push(Op::Div, a, b);
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    Tensor& o = out(v);
    o.shape = ta.shape;
    o.data.resize(ta.size());
    for (size_t i = 0; i < ta.size(); ++i) o.data[i] = ta.data[i] / tb.data[i];
    return v;
}

Var Tape::neg(Var a) {
    check(a);
    Var v = push(Op::Neg, a, -1);
    const Tensor& ta = nodes_[a].value;
    Tensor& o = out(v);
    o.shape = ta.shape;
    o.data.resize(ta.size());
    for (size_t i = 0; i < ta.size(); ++i) o.data[i] = -ta.data[i];
    return v;
}

Var Tape::matmul(Var a, Var b) {
    require(value(a).shape.size() == 2 && value(b).shape.size() == 2,
            "matmul: inputs must be 2-D");
    require(value(a).shape[1] == value(b).shape[0], "matmul: inner dimension mismatch");
    const int m = value(a).shape[0], k = value(a).shape[1], n = value(b).shape[1];
    Var v = push(Op::MatMul, a, b);
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    Tensor& o = out(v);
    o.shape = {m, n};
    o.data.resize(static_cast<size_t>(m) * n);
    matmul_kernel(ta.data.data(), tb.data.data(), o.data.data(), m, k, n);
    return v;
}

Var Tape::transpose(Var a) {
    require(value(a).shape.size() == 2, "transpose: input must be 2-D");
    const int r = value(a).shape[0], c = value(a).shape[1];
    Var v = push(Op::Transpose, a, -1);
    const Tensor& ta = nodes_[a].value;
    Tensor& o = out(v);
    o.shape = {c, r};
    o.data.resize(ta.size());
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) {
            o.data[static_cast<size_t>(j) * r + i] = ta.data[static_cast<size_t>(i) * c + j];
        }
    }
    return v;
}

Var Tape::exp(Var a) {
    check(a);
    Var v = push(Op::Exp, a, -1);
    const Tensor& ta = nodes_[a].value;
    Tensor& o = out(v);
    o.shape = ta.shape;
    o.data.resize(ta.size());
    for (size_t i = 0; i < ta.size(); ++i) o.data[i] = std::exp(ta.data[i]);
    return v;
}

Var Tape::log(Var a) {
    check(a);
    Var v = push(Op::Log, a, -1);
    const Tensor& ta = nodes_[a].value;
    Tensor& o = out(v);
    o.shape = ta.shape;
    o.data.resize(ta.size());
    for (size_t i = 0; i < ta.size(); ++i) o.data[i] = std::log(ta.data[i]);
    return v;
}

Var Tape::relu(Var a) {
    check(a);
    Var v = push(Op::Relu, a, -1);
    const Tensor& ta = nodes_[a].value;
    Tensor& o = out(v);
    o.shape = ta.shape;
    o.data.resize(ta.size());
    for (size_t i = 0; i < ta.size(); ++i) o.data[i] = ta.data[i] > 0.0 ? ta.data[i] : 0.0;
    return v;
}

Var Tape::relu_mask(Var a) {
    check(a);
    Var v = push(Op::ReluMask, a, -1);
    const Tensor& ta = nodes_[a].value;
    Tensor& o = out(v);
    o.shape = ta.shape;
    o.data.resize(ta.size());
    for (size_t i = 0; i < ta.size(); ++i) o.data[i] = ta.data[i] > 0.0 ? 1.0 : 0.0;
    return v;
}

Var Tape::minimum(Var a, Var b) {
    require(value(a).same_shape(value(b)), "minimum: shape mismatch");
    Var v = push(Op::Minimum, a, b);
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    Tensor& o = out(v);
    o.shape = ta.shape;
    o.data.resize(ta.size());
    for (size_t i = 0; i < ta.size(); ++i) o.data[i] = std::min(ta.data[i], tb.data[i]);
    return v;
}

Var Tape::min_mask_left(Var a, Var b) {
    require(value(a).same_shape(value(b)), "min_mask_left: shape mismatch");
    Var v = push(Op::MinMaskLeft, a, b);
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    Tensor& o = out(v);
    o.shape = ta.shape;
    o.data.resize(ta.size());
    for (size_t i = 0; i < ta.size(); ++i) o.data[i] = ta.data[i] <= tb.data[i] ? 1.0 : 0.0;
    return v;
}

Var Tape::logsumexp_rows(Var a, double alpha) {
    require(value(a).shape.size() == 2, "logsumexp_rows: input must be 2-D");
    require(alpha > 0.0, "logsumexp_rows: alpha must be positive");
    const int rows = value(a).shape[0], cols = value(a).shape[1];
    Var v = push(Op::LogSumExpRows, a, -1);
    nodes_[v].attr = alpha;
    const Tensor& ta = nodes_[a].value;
    Tensor& o = out(v);
    o.shape = {rows};
    o.data.resize(rows);
    for (int i = 0; i < rows; ++i) {
        const double* x = ta.data.data() + static_cast<size_t>(i) * cols;
        double m = x[0];
        for (int j = 1; j < cols; ++j) m = std::max(m, x[j]);
        double s = 0.0;
        for (int j = 0; j < cols; ++j) s += std::exp((x[j] - m) / alpha);
        o.data[i] = m + alpha * std::log(s);
    }
    return v;
}

Var Tape::sum_all(Var a) {
    check(a);
    Var v = push(Op::SumAll, a, -1);
    const Tensor& ta = nodes_[a].value;
    nodes_[v].saved_shape = ta.shape;
    Tensor& o = out(v);
    o.shape = {};
    o.data.resize(1);
    double s = 0.0;
    for (double x : ta.data) s += x;
    o.data[0] = s;
    return v;
}

Var Tape::sum_rows(Var a) {
    require(value(a).shape.size() == 2, "sum_rows: input must be 2-D");
    Var v = push(Op::SumRows, a, -1);
    const Tensor& ta = nodes_[a].value;
    const int rows = ta.shape[0], cols = ta.shape[1];
    Tensor& o = out(v);
    o.shape = {rows};
    o.data.resize(rows);
    for (int i = 0; i < rows; ++i) {
        const double* x = ta.data.data() + static_cast<size_t>(i) * cols;
        double s = 0.0;
        for (int j = 0; j < cols; ++j) s += x[j];
        o.data[i] = s;
    }
    return v;
}

Var Tape::sum_cols(Var a) {
    require(value(a).shape.size() == 2, "sum_cols: input must be 2-D");
    Var v = push(Op::SumCols, a, -1);
    const Tensor& ta = nodes_[a].value;
    const int rows = ta.shape[0], cols = ta.shape[1];
    Tensor& o = out(v);
    o.shape = {cols};
    o.data.assign(cols, 0.0);
    for (int i = 0; i < rows; ++i) {
        const double* x = ta.data.data() + static_cast<size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) o.data[j] += x[j];
    }
    return v;
}

Var Tape::broadcast_col(Var a, int cols) {
    require(value(a).shape.size() == 1, "broadcast_col: input must be 1-D");
    require(cols > 0, "broadcast_col: cols must be positive");
    Var v = push(Op::BroadcastCol, a, -1);
    const Tensor& ta = nodes_[a].value;
    const int rows = ta.shape[0];
    Tensor& o = out(v);
    o.shape = {rows, cols};
    o.data.resize(static_cast<size_t>(rows) * cols);
    for (int i = 0; i < rows; ++i) {
        std::fill(o.data.begin() + static_cast<size_t>(i) * cols,
                  o.data.begin() + static_cast<size_t>(i + 1) * cols, ta.data[i]);
    }
    return v;
}

Var Tape::broadcast_row(Var a, int rows) {
    require(value(a).shape.size() == 1, "broadcast_row: input must be 1-D");
    require(rows > 0, "broadcast_row: rows must be positive");
    Var v = push(Op::BroadcastRow, a, -1);
    const Tensor& ta = nodes_[a].value;
    const int cols = ta.shape[0];
    Tensor& o = out(v);
    o.shape = {rows, cols};
    o.data.resize(static_cast<size_t>(rows) * cols);
    for (int i = 0; i < rows; ++i) {
        std::copy(ta.data.begin(), ta.data.end(), o.data.begin() + static_cast<size_t>(i) * cols);
    }
    return v;
}

Var Tape::expand_scalar(Var a, std::vector<int> shape) {
    require(value(a).size() == 1, "expand_scalar: input must be scalar");
    Var v = push(Op::ExpandScalar, a, -1);
    const Tensor& ta = nodes_[a].value;
    Tensor& o = out(v);
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    o.shape = std::move(shape);
    o.data.assign(n, ta.data[0]);
    return v;
}

Var Tape::scale(Var a, double c) {
    check(a);
    Var v = push(Op::Scale, a, -1);
    nodes_[v].attr = c;
    const Tensor& ta = nodes_[a].value;
    Tensor& o = out(v);
    o.shape = ta.shape;
    o.data.resize(ta.size());
    for (size_t i = 0; i < ta.size(); ++i) o.data[i] = c * ta.data[i];
    return v;
}

Var Tape::add_scalar(Var a, double c) {
    check(a);
    Var v = push(Op::AddScalar, a, -1);
    nodes_[v].attr = c;
    const Tensor& ta = nodes_[a].value;
    Tensor& o = out(v);
    o.shape = ta.shape;
    o.data.resize(ta.size());
    for (size_t i = 0; i < ta.size(); ++i) o.data[i] = ta.data[i] + c;
    return v;
}

Var Tape::gather_cols(Var a, std::vector<int> idx) {
    require(value(a).shape.size() == 2, "gather_cols: input must be 2-D");
    require(static_cast<int>(idx.size()) == value(a).shape[0],
            "gather_cols: index size mismatch");
    Var v = push(Op::GatherCols, a, -1);
    Node& n = nodes_[v];
    n.idx = std::move(idx);
    const Tensor& ta = nodes_[a].value;
    const int rows = ta.shape[0], cols = ta.shape[1];
    Tensor& o = out(v);
    o.shape = {rows};
    o.data.resize(rows);
    for (int i = 0; i < rows; ++i) {
        const int j = n.idx[i];
        require(j >= 0 && j < cols, "gather_cols: index out of range");
        o.data[i] = ta.data[static_cast<size_t>(i) * cols + j];
    }
    return v;
}

Var Tape::scatter_cols(Var a, std::vector<int> idx, int cols) {
    require(value(a).shape.size() == 1, "scatter_cols: input must be 1-D");
    require(static_cast<int>(idx.size()) == value(a).shape[0],
            "scatter_cols: index size mismatch");
    Var v = push(Op::ScatterCols, a, -1);
    Node& n = nodes_[v];
    n.idx = std::move(idx);
    n.i0 = cols;
    const Tensor& ta = nodes_[a].value;
    const int rows = ta.shape[0];
    Tensor& o = out(v);
    o.shape = {rows, cols};
    o.data.assign(static_cast<size_t>(rows) * cols, 0.0);
    for (int i = 0; i < rows; ++i) {
        const int j = n.idx[i];
        require(j >= 0 && j < cols, "scatter_cols: index out of range");
        o.data[static_cast<size_t>(i) * cols + j] = ta.data[i];
    }
    return v;
}

Var Tape::slice(Var a, int offset, int len) {
    require(value(a).shape.size() == 1, "slice: input must be 1-D");
    require(offset >= 0 && len >= 0 && offset + len <= value(a).shape[0],
            "slice: out of range");
    Var v = push(Op::Slice, a, -1);
    Node& n = nodes_[v];
    const Tensor& ta = nodes_[a].value;
    n.i0 = offset;
    n.i1 = ta.shape[0];
    Tensor& o = out(v);
    o.shape = {len};
    o.data.assign(ta.data.begin() + offset, ta.data.begin() + offset + len);
    return v;
}

Var Tape::pad(Var a, int offset, int total) {
    require(value(a).shape.size() == 1, "pad: input must be 1-D");
    require(offset >= 0 && offset + value(a).shape[0] <= total, "pad: out of range");
    Var v = push(Op::Pad, a, -1);
    Node& n = nodes_[v];
    const Tensor& ta = nodes_[a].value;
    n.i0 = offset;
    n.i1 = ta.shape[0];
    Tensor& o = out(v);
    o.shape = {total};
    o.data.assign(total, 0.0);
    std::copy(ta.data.begin(), ta.data.end(), o.data.begin() + offset);
    return v;
}

Var Tape::reshape(Var a, std::vector<int> shape) {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    require(n == value(a).size(), "reshape: size mismatch");
    Var v = push(Op::Reshape, a, -1);
    const Tensor& ta = nodes_[a].value;
    nodes_[v].saved_shape = ta.shape;
    Tensor& o = out(v);
    o.shape = std::move(shape);
    o.data = ta.data;
    return v;
}

Var Tape::root_solve(const ResidualFn& f, Var theta, const Tensor& w0, const SolverFn& solver,
                     RootSolveConfig config) {
    Tensor theta_value = value(theta);
    Tensor w_star = solver(theta_value, w0);
    // Verify the solver contract on a scratch tape.
    {
        Tape scratch;
        Var th = scratch.leaf(theta_value);
        Var w = scratch.leaf(w_star);
        Var r = f(scratch, th, w);
        double res = 0.0;
        for (double x : scratch.value(r).data) res = std::max(res, std::fabs(x));
        if (res > config.residual_tol) {
            throw std::runtime_error("root_solve: solver residual " + std::to_string(res) +
                                     " exceeds tolerance " +
                                     std::to_string(config.residual_tol));
        }
    }
    Var v = push(Op::RootSolve, theta, -1);
    Node& n = nodes_[v];
    n.root = std::make_shared<RootSolveData>(
        RootSolveData{f, std::move(theta_value), w_star, config});
    n.value = std::move(w_star);
    return v;
}

std::vector<Var> Tape::gradients(Var out_var, const std::vector<Var>& wrt,
                                 const Tensor* cotangent) {
    const int n0 = static_cast<int>(check(out_var)) + 1;
    std::vector<uint8_t> need(n0, 0);
    for (Var v : wrt) {
        check(v);
        if (v < n0) need[v] = 1;
    }
    for (int i = 0; i < n0; ++i) {
        if (need[i]) continue;
        const Node& nd = nodes_[i];
        if ((nd.a >= 0 && need[nd.a]) || (nd.b >= 0 && need[nd.b])) need[i] = 1;
    }

    std::vector<Var> adj(n0, -1);
    if (cotangent) {
        require(cotangent->same_shape(value(out_var)), "gradients: cotangent shape mismatch");
        adj[out_var] = leaf(*cotangent);
    } else {
        require(value(out_var).size() == 1, "gradients: non-scalar output needs a cotangent");
        Tensor seed = value(out_var);
        seed.data[0] = 1.0;
        adj[out_var] = leaf(std::move(seed));
    }

    for (int i = out_var; i >= 0; --i) {
        if (adj[i] < 0 || !need[i]) continue;
        backward_node(i, adj[i], need, adj);
    }

    std::vector<Var> result;
    result.reserve(wrt.size());
    for (Var v : wrt) {
        if (v < n0 && adj[v] >= 0) {
            result.push_back(adj[v]);
        } else {
            result.push_back(leaf(Tensor::zeros(value(v).shape)));
        }
    }
    return result;
}

void Tape::accumulate(std::vector<Var>& adj, Var target, Var contribution) {
    adj[target] = adj[target] < 0 ? contribution : add(adj[target], contribution);
}

void Tape::backward_node(Var id, Var g, const std::vector<uint8_t>& need,
                         std::vector<Var>& adj) {
    // Plain fields are copied out first: emitting adjoint ops may reallocate
    // node storage.
    const Op op = nodes_[id].op;
    const int a = nodes_[id].a;
    const int b = nodes_[id].b;
    const double attr = nodes_[id].attr;
    const int i0 = nodes_[id].i0;
    const int i1 = nodes_[id].i1;

    const bool need_a = a >= 0 && need[a];
    const bool need_b = b >= 0 && need[b];
    if (!need_a && !need_b) return;

    switch (op) {
        case Op::Leaf:
            break;
        case Op::Add:
            if (need_a) accumulate(adj, a, g);
            if (need_b) accumulate(adj, b, g);
            break;
        case Op::Sub:
            if (need_a) accumulate(adj, a, g);
            if (need_b) accumulate(adj, b, neg(g));
            break;
        case Op::Mul:
            if (need_a) accumulate(adj, a, mul(g, b));
            if (need_b) accumulate(adj, b, mul(g, a));
            break;
        case Op::Div:
            if (need_a) accumulate(adj, a, div(g, b));
            if (need_b) accumulate(adj, b, neg(div(mul(g, id), b)));
            break;
        case Op::Neg:
            if (need_a) accumulate(adj, a, neg(g));
            break;
        case Op::MatMul:
            if (need_a) accumulate(adj, a, matmul(g, transpose(b)));
            if (need_b) accumulate(adj, b, matmul(transpose(a), g));
            break;
        case Op::Transpose:
            if (need_a) accumulate(adj, a, transpose(g));
            break;
        case Op::Exp:
            if (need_a) accumulate(adj, a, mul(g, id));
            break;
        case Op::Log:
            if (need_a) accumulate(adj, a, div(g, a));
            break;
        case Op::Relu:
            if (need_a) accumulate(adj, a, mul(g, relu_mask(a)));
            break;
        case Op::ReluMask:
        case Op::MinMaskLeft:
            break;  // masks carry no gradient
        case Op::Minimum:
            if (need_a || need_b) {
                Var m = min_mask_left(a, b);
                if (need_a) accumulate(adj, a, mul(g, m));
                if (need_b) accumulate(adj, b, sub(g, mul(g, m)));
            }
            break;
        case Op::LogSumExpRows:
            if (need_a) {
                const int cols = value(a).shape[1];
                // softmax(x/alpha) row-wise, written with differentiable ops
                Var centered = sub(a, broadcast_col(id, cols));
                Var soft = exp(scale(centered, 1.0 / attr));
                accumulate(adj, a, mul(broadcast_col(g, cols), soft));
            }
            break;
        case Op::SumAll:
            if (need_a) accumulate(adj, a, expand_scalar(g, nodes_[id].saved_shape));
            break;
        case Op::SumRows:
            if (need_a) accumulate(adj, a, broadcast_col(g, value(a).shape[1]));
            break;
        case Op::SumCols:
            if (need_a) accumulate(adj, a, broadcast_row(g, value(a).shape[0]));
            break;
        case Op::BroadcastCol:
            if (need_a) accumulate(adj, a, sum_rows(g));
            break;
        case Op::BroadcastRow:
            if (need_a) accumulate(adj, a, sum_cols(g));
            break;
        case Op::ExpandScalar:
            if (need_a) accumulate(adj, a, sum_all(g));
            break;
        case Op::Scale:
            if (need_a) accumulate(adj, a, scale(g, attr));
            break;
        case Op::AddScalar:
            if (need_a) accumulate(adj, a, g);
            break;
        case Op::GatherCols:
            if (need_a) {
                std::vector<int> idx = nodes_[id].idx;
                const int cols = value(a).shape[1];
                accumulate(adj, a, scatter_cols(g, std::move(idx), cols));
            }
            break;
        case Op::ScatterCols:
            if (need_a) {
                std::vector<int> idx = nodes_[id].idx;
                accumulate(adj, a, gather_cols(g, std::move(idx)));
            }
            break;
        case Op::Slice:
            if (need_a) accumulate(adj, a, pad(g, i0, i1));
            break;
        case Op::Pad:
            if (need_a) accumulate(adj, a, slice(g, i0, i1));
            break;
        case Op::Reshape:
            if (need_a) {
                std::vector<int> shape = nodes_[id].saved_shape;
                accumulate(adj, a, reshape(g, std::move(shape)));
            }
            break;
        case Op::RootSolve:
            if (need_a) {
                auto data = nodes_[id].root;
                Tensor gtheta = root_solve_backward(*data, value(g));
                accumulate(adj, a, leaf(std::move(gtheta)));
            }
            break;
    }
}

Tensor Tape::root_solve_backward(const RootSolveData& data, const Tensor& g) const {
    auto vjp_w = [&](const std::vector<double>& cot) {
        Tape sub;
        Var th = sub.leaf(data.theta_value);
        Var w = sub.leaf(data.w_star);
        Var r = data.f(sub, th, w);
        Tensor c = data.w_star;
        c.data = cot;
        auto gs = sub.gradients(r, {w}, &c);
        return sub.value(gs[0]).data;
    };
    std::vector<double> u;
    if (data.config.use_identity_inverse) {
        u = g.data;
    } else {
        CgResult res = conjugate_gradient(vjp_w, g.data, data.config.cg_tol,
                                          data.config.cg_max_iter);
        if (!res.converged) {
            throw SolverError("root_solve: backward CG did not converge (residual " +
                                  std::to_string(res.residual_norm) + ")",
                              res.iterations);
        }
        u = std::move(res.x);
    }
    Tape sub;
    Var th = sub.leaf(data.theta_value);
    Var w = sub.leaf(data.w_star);
    Var r = data.f(sub, th, w);
    Tensor c = data.w_star;
    c.data.resize(u.size());
    for (size_t i = 0; i < u.size(); ++i) c.data[i] = -u[i];
    auto gs = sub.gradients(r, {th}, &c);
    return sub.value(gs[0]);
}

CgResult conjugate_gradient(
    const std::function<std::vector<double>(const std::vector<double>&)>& matvec,
    const std::vector<double>& b, double tol, int max_iter) {
    if (!(tol > 0.0)) throw std::invalid_argument("conjugate_gradient: tol must be positive");
    if (max_iter < 1) throw std::invalid_argument("conjugate_gradient: max_iter must be >= 1");
    const size_t n = b.size();
    CgResult res;
    res.x.assign(n, 0.0);
    double bnorm2 = 0.0;
    for (double v : b) bnorm2 += v * v;
    if (bnorm2 == 0.0) {
        res.converged = true;
        return res;
    }
    std::vector<double> r = b;
    std::vector<double> p = b;
    double rs = bnorm2;
    const double stop2 = tol * tol * bnorm2;
    for (int it = 1; it <= max_iter; ++it) {
        std::vector<double> ap = matvec(p);
        double pap = 0.0;
        for (size_t i = 0; i < n; ++i) pap += p[i] * ap[i];
        if (std::fabs(pap) < 1e-300) {
            throw SolverError("conjugate_gradient: breakdown (zero curvature direction)", it);
        }
        const double step = rs / pap;
        for (size_t i = 0; i < n; ++i) {
            res.x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        double rs_new = 0.0;
        for (double v : r) rs_new += v * v;
        res.iterations = it;
        res.residual_norm = std::sqrt(rs_new);
        if (rs_new <= stop2) {
            res.converged = true;
            return res;
        }
        const double beta = rs_new / rs;
        rs = rs_new;
        for (size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    }
    return res;
}

std::vector<Tensor> mixed_second_order_product(Tape& t, Var loss,
                                               const std::vector<Var>& theta_vars,
                                               const std::vector<Var>& w_vars,
                                               const std::vector<Tensor>& v) {
    if (w_vars.size() != v.size()) {
        throw std::invalid_argument("mixed_second_order_product: w/v size mismatch");
    }
    std::vector<Var> g_w = t.gradients(loss, w_vars);
    Var s = -1;
    for (size_t i = 0; i < w_vars.size(); ++i) {
        Var term = t.sum_all(t.mul(g_w[i], t.leaf(v[i])));
        s = s < 0 ? term : t.add(s, term);
    }
    std::vector<Var> grads = t.gradients(s, theta_vars);
    std::vector<Tensor> result;
    result.reserve(grads.size());
    for (Var g : grads) result.push_back(t.value(g));
    return result;
}

}  // namespace omd::ad
