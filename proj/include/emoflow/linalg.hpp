#pragma once

#include "emoflow/rng.hpp"
#include "emoflow/tensor.hpp"

namespace emoflow {

// Orthonormalizes the rows of m in place order (modified Gram-Schmidt).
// Requires rows <= cols and full row rank of the input.
Tensor orthonormal_rows(const Tensor& m);

// Random matrix with orthonormal columns (rows >= cols), drawn from rng.
Tensor random_orthonormal_cols(std::size_t rows, std::size_t cols, RngStream& rng);

// Solves A x = b for symmetric positive definite A (n x n) by Gaussian
// elimination with partial pivoting; b may have multiple columns.
Tensor solve_linear(const Tensor& a, const Tensor& b);

} // namespace emoflow
