#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace omd::ad {

/// Dense row-major tensor of doubles. Rank 0 (shape {}) is a scalar.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    static Tensor scalar(double v) { return Tensor{{}, {v}}; }
    static Tensor vector(std::vector<double> v) {
        const int n = static_cast<int>(v.size());
        return Tensor{{n}, std::move(v)};
    }
    static Tensor matrix(int rows, int cols, std::vector<double> v) {
        if (static_cast<size_t>(rows) * cols != v.size()) {
            throw std::invalid_argument("Tensor::matrix: size mismatch");
        }
        return Tensor{{rows, cols}, std::move(v)};
    }
    static Tensor zeros(std::vector<int> shape) {
        size_t n = 1;
        for (int d : shape) n *= static_cast<size_t>(d);
        return Tensor{std::move(shape), std::vector<double>(n, 0.0)};
    }

    size_t size() const { return data.size(); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    double scalar_value() const {
        if (data.size() != 1) throw std::invalid_argument("Tensor: not a scalar");
        return data[0];
    }
};

using Var = int;

class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, int iterations)
        : std::runtime_error(what), iterations_(iterations) {}
    int iterations() const { return iterations_; }

private:
    int iterations_;
};

struct CgResult {
    std::vector<double> x;
    int iterations = 0;
    bool converged = false;
    double residual_norm = 0.0;
};

/// Matrix-free conjugate gradient for A x = b. Stops when
/// ||Ax - b|| <= tol * ||b|| or max_iter is reached (reported via
/// `converged`). Throws SolverError on a zero-curvature breakdown. The
/// caller is responsible for A being symmetric positive-definite; the
/// backward rule of root_solve applies it to Bellman-style Jacobians that
/// are only diagonally dominant, a documented caveat.
CgResult conjugate_gradient(
    const std::function<std::vector<double>(const std::vector<double>&)>& matvec,
    const std::vector<double>& b, double tol, int max_iter);

struct RootSolveConfig {
    bool use_identity_inverse = true;
    double cg_tol = 1e-10;
    int cg_max_iter = 200;
    double residual_tol = 1e-8;
};

class Tape;

/// Builds the residual f(theta, w) on the given tape; must return a node of
/// the same shape as w.
using ResidualFn = std::function<Var(Tape&, Var theta, Var w)>;
/// Black-box solver returning w* with f(theta, w*) = 0.
using SolverFn = std::function<Tensor(const Tensor& theta, const Tensor& w0)>;

/// Reverse-mode tape over tensors. Ops evaluate eagerly; gradients() emits
/// the adjoint computation as further tape nodes, so gradients of gradients
/// (second order) work by calling it again. reset() rewinds the tape while
/// keeping node storage for reuse across iterations.
class Tape {
public:
    Var leaf(Tensor value);
    Var leaf(double scalar) { return leaf(Tensor::scalar(scalar)); }

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);
    Var neg(Var a);
    Var matmul(Var a, Var b);
    Var transpose(Var a);
    Var exp(Var a);
    Var log(Var a);
    Var relu(Var a);
    Var relu_mask(Var a);  // 1 where x > 0; not differentiated
    Var minimum(Var a, Var b);
    Var min_mask_left(Var a, Var b);  // 1 where a <= b; not differentiated
    /// alpha * log sum_j exp(x[i,j] / alpha) per row: [B,C] -> [B].
    Var logsumexp_rows(Var a, double alpha);
    Var sum_all(Var a);                    // -> scalar
    Var sum_rows(Var a);                   // [B,C] -> [B]
    Var sum_cols(Var a);                   // [B,C] -> [C]
    Var broadcast_col(Var a, int cols);    // [B] -> [B,cols]
    Var broadcast_row(Var a, int rows);    // [C] -> [rows,C]
    Var expand_scalar(Var a, std::vector<int> shape);
    Var scale(Var a, double c);
    Var add_scalar(Var a, double c);
    Var gather_cols(Var a, std::vector<int> idx);              // [B,C] -> [B]
    Var scatter_cols(Var a, std::vector<int> idx, int cols);   // [B] -> [B,C]
    Var slice(Var a, int offset, int len);                     // 1-D
    Var pad(Var a, int offset, int total);                     // 1-D
    Var reshape(Var a, std::vector<int> shape);

    /// Differentiable root solve (forward runs `solver`; backward applies
    /// the implicit-function rule). In exact mode the transposed Jacobian
    /// system is solved matrix-free by conjugate_gradient; in identity mode
    /// the inverse Jacobian is replaced by the identity. The initial point
    /// w0 is a plain value and receives no gradient. Throws if the solver's
    /// result violates ||f(theta, w*)||_inf <= residual_tol.
    Var root_solve(const ResidualFn& f, Var theta, const Tensor& w0, const SolverFn& solver,
                   RootSolveConfig config = {});

    /// Reverse-mode vector-Jacobian product: adjoints of `wrt` for the
    /// output node `out` seeded with `cotangent` (default: scalar 1; non-
    /// scalar outputs require an explicit cotangent). Returned Vars live on
    /// this tape, so they can be differentiated again.
    std::vector<Var> gradients(Var out, const std::vector<Var>& wrt,
                               const Tensor* cotangent = nullptr);

    const Tensor& value(Var v) const { return nodes_[check(v)].value; }
    size_t node_count() const { return count_; }
    void reset() { count_ = 0; }

private:
    enum class Op : uint8_t {
        Leaf, Add, Sub, Mul, Div, Neg, MatMul, Transpose, Exp, Log, Relu, ReluMask,
        Minimum, MinMaskLeft, LogSumExpRows, SumAll, SumRows, SumCols, BroadcastCol,
        BroadcastRow, ExpandScalar, Scale, AddScalar, GatherCols, ScatterCols, Slice,
        Pad, Reshape, RootSolve
    };

    struct RootSolveData {
        ResidualFn f;
        Tensor theta_value;
        Tensor w_star;
        RootSolveConfig config;
    };

    struct Node {
        Op op = Op::Leaf;
        int a = -1;
        int b = -1;
        double attr = 0.0;
        int i0 = 0;
        int i1 = 0;
        std::vector<int> idx;
        std::vector<int> saved_shape;
        std::shared_ptr<RootSolveData> root;
        Tensor value;
    };

    size_t check(Var v) const {
        if (v < 0 || static_cast<size_t>(v) >= count_) {
            throw std::invalid_argument("Tape: invalid var id");
        }
        return static_cast<size_t>(v);
    }
    Node& node(Var v) { return nodes_[check(v)]; }
    const Node& node(Var v) const { return nodes_[check(v)]; }
    Var push(Op op, int a, int b);
    Tensor& out(Var v) { return nodes_[static_cast<size_t>(v)].value; }
    void accumulate(std::vector<Var>& adj, Var target, Var contribution);
    void backward_node(Var id, Var g, const std::vector<uint8_t>& need, std::vector<Var>& adj);
    Tensor root_solve_backward(const RootSolveData& data, const Tensor& g) const;

    std::vector<Node> nodes_;
    size_t count_ = 0;
};

/// v^T d^2 L / (dtheta dw): the theta-gradient of <v, dL/dw>, with L a
/// scalar node on `t`. Multiple w blocks are supported by passing matching
/// (w_vars, v) lists. Returns one tensor per theta var.
std::vector<Tensor> mixed_second_order_product(Tape& t, Var loss,
                                               const std::vector<Var>& theta_vars,
                                               const std::vector<Var>& w_vars,
                                               const std::vector<Tensor>& v);

}  // namespace omd::ad
