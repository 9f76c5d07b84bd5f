#include "omd/nets.hpp"

#include <cmath>
#include <stdexcept>

namespace omd {

size_t MlpSpec::param_count() const {
    size_t n = 0;
    int in = input_dim;
    for (int h : hidden_dims) {
        n += static_cast<size_t>(in) * h + h;
        in = h;
    }
    n += static_cast<size_t>(in) * output_dim + output_dim;
    return n;
}

std::vector<double> init_mlp_params(const MlpSpec& spec, std::mt19937_64& rng) {
    std::vector<double> params;
    params.reserve(spec.param_count());
    int in = spec.input_dim;
    std::vector<int> dims = spec.hidden_dims;
    dims.push_back(spec.output_dim);
    for (int out : dims) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (int i = 0; i < in * out + out; ++i) params.push_back(u(rng));
        in = out;
    }
    return params;
}

ad::Var mlp_forward(ad::Tape& t, ad::Var flat_params, const MlpSpec& spec, ad::Var x) {
    const int batch = t.value(x).shape.at(0);
    int in = spec.input_dim;
    int offset = 0;
    std::vector<int> dims = spec.hidden_dims;
    dims.push_back(spec.output_dim);
    ad::Var h = x;
    for (size_t layer = 0; layer < dims.size(); ++layer) {
        const int out = dims[layer];
        ad::Var w = t.reshape(t.slice(flat_params, offset, in * out), {in, out});
        offset += in * out;
        ad::Var b = t.slice(flat_params, offset, out);
        offset += out;
        h = t.add(t.matmul(h, w), t.broadcast_row(b, batch));
        if (layer + 1 < dims.size()) h = t.relu(h);
        in = out;
    }
    return h;
}

std::vector<double> mlp_forward_plain(std::span<const double> params, const MlpSpec& spec,
                                      std::span<const double> input) {
    if (static_cast<int>(input.size()) != spec.input_dim) {
        throw std::invalid_argument("mlp_forward_plain: input size mismatch");
    }
    std::vector<double> h(input.begin(), input.end());
    std::vector<double> next;
    int in = spec.input_dim;
    size_t offset = 0;
    std::vector<int> dims = spec.hidden_dims;
    dims.push_back(spec.output_dim);
    for (size_t layer = 0; layer < dims.size(); ++layer) {
        const int out = dims[layer];
        const double* w = params.data() + offset;
        offset += static_cast<size_t>(in) * out;
        const double* b = params.data() + offset;
        offset += out;
        next.assign(b, b + out);
        for (int i = 0; i < in; ++i) {
            const double hv = h[i];
            if (hv == 0.0) continue;
            const double* wr = w + static_cast<size_t>(i) * out;
            for (int j = 0; j < out; ++j) next[j] += hv * wr[j];
        }
        if (layer + 1 < dims.size()) {
            for (double& v : next) v = v > 0.0 ? v : 0.0;
        }
        h = next;
        in = out;
    }
    return h;
}

void Adam::step(std::span<double> params, std::span<const double> grad) {
    if (params.size() != m_.size() || grad.size() != m_.size()) {
        throw std::invalid_argument("Adam::step: size mismatch");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < m_.size(); ++i) {
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
        params[i] -= lr_ * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps_);
    }
}

}  // namespace omd
