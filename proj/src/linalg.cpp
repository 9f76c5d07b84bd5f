#include "omd/linalg.hpp"

#include <cmath>
#include <stdexcept>

namespace omd {

std::vector<double> solve_dense(std::vector<double> a, std::vector<double> b, int n) {
    if (static_cast<int>(a.size()) != n * n || static_cast<int>(b.size()) != n) {
        throw std::invalid_argument("solve_dense: shape mismatch");
    }
    std::vector<int> piv(n);
    for (int k = 0; k < n; ++k) {
        int p = k;
        double best = std::fabs(a[k * n + k]);
        for (int i = k + 1; i < n; ++i) {
            double v = std::fabs(a[i * n + k]);
            if (v > best) {
                best = v;
                p = i;
            }
        }
        if (best < 1e-300) {
            throw std::runtime_error("solve_dense: singular matrix");
        }
        piv[k] = p;
        if (p != k) {
            for (int j = 0; j < n; ++j) std::swap(a[k * n + j], a[p * n + j]);
            std::swap(b[k], b[p]);
        }
        const double inv = 1.0 / a[k * n + k];
        for (int i = k + 1; i < n; ++i) {
            const double f = a[i * n + k] * inv;
            if (f == 0.0) continue;
            a[i * n + k] = 0.0;
            for (int j = k + 1; j < n; ++j) a[i * n + j] -= f * a[k * n + j];
            b[i] -= f * b[k];
        }
    }
    for (int i = n - 1; i >= 0; --i) {
        double s = b[i];
        for (int j = i + 1; j < n; ++j) s -= a[i * n + j] * b[j];
        b[i] = s / a[i * n + i];
    }
    return b;
}

}  // namespace omd
