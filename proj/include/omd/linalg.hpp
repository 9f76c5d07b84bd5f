#pragma once

#include <vector>

namespace omd {

/// Solves the dense system A x = b with LU factorization and partial
/// pivoting. `a` is row-major n x n and is consumed. Throws
/// std::runtime_error on a numerically singular matrix.
std::vector<double> solve_dense(std::vector<double> a, std::vector<double> b, int n);

}  // namespace omd
