#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "omd/autodiff.hpp"

namespace omd {

/// MLP with ReLU hidden activations. Parameters live in one flat vector,
/// per layer: weights (fan_in x fan_out, row-major) then biases.
struct MlpSpec {
    int input_dim = 0;
    int output_dim = 0;
    std::vector<int> hidden_dims = {32, 32};

    size_t param_count() const;
};

/// Fan-in-scaled uniform init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
std::vector<double> init_mlp_params(const MlpSpec& spec, std::mt19937_64& rng);

/// Builds the forward pass on the tape: x is [B, input_dim], result is
/// [B, output_dim].
ad::Var mlp_forward(ad::Tape& t, ad::Var flat_params, const MlpSpec& spec, ad::Var x);

/// Plain single-input forward pass without a tape (hot paths: acting and
/// evaluation).
std::vector<double> mlp_forward_plain(std::span<const double> params, const MlpSpec& spec,
                                      std::span<const double> input);

/// Adam with bias correction; beta = (0.9, 0.999), eps = 1e-8.
class Adam {
public:
    Adam() = default;
    explicit Adam(size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

    void step(std::span<double> params, std::span<const double> grad);

private:
    double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    long t_ = 0;
    std::vector<double> m_, v_;
};

}  // namespace omd
