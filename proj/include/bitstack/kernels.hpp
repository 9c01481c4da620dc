#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bitstack/matrix.hpp"

// Data-parallel inner loops. Each kernel has an OpenMP version and a serial
// reference with the identical per-element summation order, so the two agree
// bit-for-bit regardless of thread count.
namespace bitstack::kernels {

/// a (p x m) times b (m x n).
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);

/// a (m x k) times b (n x k) transposed.
DenseMatrix matmul_transposed(const DenseMatrix& a, const DenseMatrix& b);

/// Entrywise sign (+1/-1 per bit, LSB-first row-major) times left * right^T.
DenseMatrix signed_outer(std::span<const std::uint8_t> sign_bits, const DenseMatrix& left,
                         const DenseMatrix& right);

/// Euclidean norm of every column.
std::vector<double> column_norms(const DenseMatrix& x);

/// Multiplies row i by factors[i].
DenseMatrix scale_rows(const DenseMatrix& w, std::span<const double> factors);

namespace reference {
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix matmul_transposed(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix signed_outer(std::span<const std::uint8_t> sign_bits, const DenseMatrix& left,
                         const DenseMatrix& right);
std::vector<double> column_norms(const DenseMatrix& x);
DenseMatrix scale_rows(const DenseMatrix& w, std::span<const double> factors);
} // namespace reference

/// Caps the OpenMP team size from BITSTACK_THREADS when it is set to a positive integer.
/// Returns the cap applied, or 0 if the variable is absent or invalid.
int configure_threads_from_env();

/// Current maximum OpenMP team size (1 without OpenMP).
int max_threads();

} // namespace bitstack::kernels
