#pragma once

#include <utility>
#include <vector>

#include "bitstack/matrix.hpp"

namespace bitstack::linalg {

/// Thin SVD m = u * diag(sigma) * v^T with d = min(rows, cols).
///
/// sigma is nonincreasing. Each column of u has its largest-magnitude entry
/// (lowest index on ties) nonnegative; v is flipped with it. Columns of u that
/// belong to zero singular values are completed to an orthonormal set from the
/// standard basis, so the zero matrix yields identity factors.
struct SvdResult {
    DenseMatrix u;             // m x d
    std::vector<double> sigma; // d
    DenseMatrix v;             // n x d
};

struct JacobiOptions {
    double tolerance = 1e-12; // relative off-diagonal threshold for a rotation
    int max_sweeps = 60;
};

/// One-sided cyclic Jacobi SVD. Throws NonConvergence when the sweep limit is
/// exhausted; the message carries the remaining relative off-diagonal residual.
SvdResult svd(const DenseMatrix& m, const JacobiOptions& options = {});

struct RankKFactors {
    DenseMatrix a; // m x k, columns sqrt(sigma_i) u_i
    DenseMatrix b; // n x k, columns sqrt(sigma_i) v_i
};

/// Frobenius-optimal rank-k factors a * b^T. Requires 1 <= k <= min(rows, cols).
RankKFactors rank_k_factors(const DenseMatrix& m, std::size_t k);

/// Same, reusing an already computed decomposition of the matrix.
RankKFactors rank_k_factors(const SvdResult& decomposition, std::size_t k);

double frobenius_norm(const DenseMatrix& m);

/// ||a - b||_F without materializing the difference.
double frobenius_distance(const DenseMatrix& a, const DenseMatrix& b);

} // namespace bitstack::linalg
