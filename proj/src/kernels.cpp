#include "bitstack/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace bitstack::kernels {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::DimensionMismatch, what);
}

inline bool sign_bit(std::span<const std::uint8_t> bits, std::size_t idx) {
    return (bits[idx >> 3] >> (idx & 7)) & 1u;
}

} // namespace

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    require(a.cols() == b.rows(), "matmul: inner dimensions differ");
    const std::size_t p = a.rows(), m = a.cols(), n = b.cols();
    DenseMatrix c(p, n);
    const auto rows = static_cast<std::ptrdiff_t>(p);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        auto out = c.row(i);
        for (std::size_t k = 0; k < m; ++k) {
            const double aik = a(i, k);
            const auto brow = b.row(k);
            for (std::size_t j = 0; j < n; ++j) out[j] += aik * brow[j];
        }
    }
    return c;
}

DenseMatrix matmul_transposed(const DenseMatrix& a, const DenseMatrix& b) {
    require(a.cols() == b.cols(), "matmul_transposed: inner dimensions differ");
    const std::size_t m = a.rows(), n = b.rows(), k = a.cols();
    DenseMatrix c(m, n);
    const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        const auto arow = a.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            const auto brow = b.row(j);
            double acc = 0.0;
            for (std::size_t r = 0; r < k; ++r) acc += arow[r] * brow[r];
            c(i, j) = acc;
        }
    }
    return c;
}

DenseMatrix signed_outer(std::span<const std::uint8_t> sign_bits, const DenseMatrix& left,
                         const DenseMatrix& right) {
    require(left.cols() == right.cols(), "signed_outer: factor ranks differ");
    const std::size_t m = left.rows(), n = right.rows(), k = left.cols();
    require(sign_bits.size() * 8 >= m * n, "signed_outer: sign buffer too short");
    DenseMatrix c(m, n);
    const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        const auto arow = left.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            const auto brow = right.row(j);
            double acc = 0.0;
            for (std::size_t r = 0; r < k; ++r) acc += arow[r] * brow[r];
            c(i, j) = sign_bit(sign_bits, i * n + j) ? acc : -acc;
        }
    }
    return c;
}

std::vector<double> column_norms(const DenseMatrix& x) {
    const std::size_t p = x.rows(), m = x.cols();
    std::vector<double> norms(m, 0.0);
    const auto cols = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t jj = 0; jj < cols; ++jj) {
        const auto j = static_cast<std::size_t>(jj);
        double acc = 0.0;
        for (std::size_t i = 0; i < p; ++i) acc += x(i, j) * x(i, j);
        norms[j] = std::sqrt(acc);
    }
    return norms;
}

DenseMatrix scale_rows(const DenseMatrix& w, std::span<const double> factors) {
    require(factors.size() == w.rows(), "scale_rows: factor count != rows");
    DenseMatrix out(w.rows(), w.cols());
    const auto rows = static_cast<std::ptrdiff_t>(w.rows());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        const auto src = w.row(i);
        auto dst = out.row(i);
        for (std::size_t j = 0; j < src.size(); ++j) dst[j] = factors[i] * src[j];
    }
    return out;
}

namespace reference {

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    require(a.cols() == b.rows(), "matmul: inner dimensions differ");
    DenseMatrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k)
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += a(i, k) * b(k, j);
    return c;
}

DenseMatrix matmul_transposed(const DenseMatrix& a, const DenseMatrix& b) {
    require(a.cols() == b.cols(), "matmul_transposed: inner dimensions differ");
    DenseMatrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j) {
            double acc = 0.0;
            for (std::size_t r = 0; r < a.cols(); ++r) acc += a(i, r) * b(j, r);
            c(i, j) = acc;
        }
    return c;
}

DenseMatrix signed_outer(std::span<const std::uint8_t> sign_bits, const DenseMatrix& left,
                         const DenseMatrix& right) {
    require(left.cols() == right.cols(), "signed_outer: factor ranks differ");
    const std::size_t n = right.rows();
    require(sign_bits.size() * 8 >= left.rows() * n, "signed_outer: sign buffer too short");
    DenseMatrix c(left.rows(), n);
    for (std::size_t i = 0; i < left.rows(); ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t r = 0; r < left.cols(); ++r) acc += left(i, r) * right(j, r);
            c(i, j) = sign_bit(sign_bits, i * n + j) ? acc : -acc;
        }
    return c;
}

std::vector<double> column_norms(const DenseMatrix& x) {
    std::vector<double> norms(x.cols(), 0.0);
    for (std::size_t j = 0; j < x.cols(); ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < x.rows(); ++i) acc += x(i, j) * x(i, j);
        norms[j] = std::sqrt(acc);
    }
    return norms;
}

DenseMatrix scale_rows(const DenseMatrix& w, std::span<const double> factors) {
    require(factors.size() == w.rows(), "scale_rows: factor count != rows");
    DenseMatrix out(w.rows(), w.cols());
    for (std::size_t i = 0; i < w.rows(); ++i)
        for (std::size_t j = 0; j < w.cols(); ++j) out(i, j) = factors[i] * w(i, j);
    return out;
}

} // namespace reference

int configure_threads_from_env() {
    const char* env = std::getenv("BITSTACK_THREADS");
    if (env == nullptr) return 0;
    char* end = nullptr;
    const long value = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || value <= 0) return 0;
    int cap = value > 4096 ? 4096 : static_cast<int>(value);
#ifdef _OPENMP
    cap = std::min(cap, omp_get_max_threads());
    omp_set_num_threads(cap);
#else
    cap = 1;
#endif
    return cap;
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

} // namespace bitstack::kernels
