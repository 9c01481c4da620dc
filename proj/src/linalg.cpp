#include "bitstack/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace bitstack::linalg {

namespace {

// Column-major working copy: column j occupies [j*rows, (j+1)*rows).
struct Columns {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    double* col(std::size_t j) { return data.data() + j * rows; }
    const double* col(std::size_t j) const { return data.data() + j * rows; }
};

double dot(const double* x, const double* y, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

void rotate(double* x, double* y, std::size_t n, double c, double s) {
    for (std::size_t i = 0; i < n; ++i) {
        const double xi = x[i];
        const double yi = y[i];
        x[i] = c * xi - s * yi;
        y[i] = s * xi + c * yi;
    }
}

// Thin SVD of a tall (rows >= cols) matrix.
SvdResult svd_tall(const DenseMatrix& m, const JacobiOptions& options) {
    const std::size_t rows = m.rows(), cols = m.cols();

    Columns g{rows, cols, std::vector<double>(rows * cols)};
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) g.col(j)[i] = m(i, j);
    Columns v{cols, cols, std::vector<double>(cols * cols, 0.0)};
    for (std::size_t j = 0; j < cols; ++j) v.col(j)[j] = 1.0;

    bool converged = false;
    double residual = 0.0;
    for (int sweep = 0; sweep < options.max_sweeps && !converged; ++sweep) {
        converged = true;
        residual = 0.0;
        for (std::size_t p = 0; p + 1 < cols; ++p) {
            for (std::size_t q = p + 1; q < cols; ++q) {
                double* gp = g.col(p);
                double* gq = g.col(q);
                const double alpha = dot(gp, gp, rows);
                const double beta = dot(gq, gq, rows);
                const double gamma = dot(gp, gq, rows);
                const double scale = std::sqrt(alpha) * std::sqrt(beta);
                if (gamma == 0.0 || scale == 0.0) continue;
                const double ratio = std::abs(gamma) / scale;
                residual = std::max(residual, ratio);
                if (ratio <= options.tolerance) continue;
                converged = false;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                rotate(gp, gq, rows, c, s);
                rotate(v.col(p), v.col(q), cols, c, s);
            }
        }
    }
    if (!converged) {
        std::ostringstream msg;
        msg << "Jacobi SVD did not converge in " << options.max_sweeps
            << " sweeps; relative off-diagonal residual " << residual;
        throw Error(ErrorCode::NonConvergence, msg.str());
    }

    std::vector<double> norms(cols);
    for (std::size_t j = 0; j < cols; ++j) norms[j] = std::sqrt(dot(g.col(j), g.col(j), rows));
    std::vector<std::size_t> order(cols);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });

    const double sigma_max = cols == 0 ? 0.0 : norms[order.front()];
    const double negligible =
        sigma_max * static_cast<double>(std::max(rows, cols)) * std::numeric_limits<double>::epsilon();

    SvdResult out{DenseMatrix(rows, cols), std::vector<double>(cols), DenseMatrix(cols, cols)};

    // Left vectors: normalized columns, then two modified Gram-Schmidt passes;
    // columns for negligible singular values are replaced by standard basis
    // vectors orthogonalized against everything before them.
    Columns u{rows, cols, std::vector<double>(rows * cols, 0.0)};
    std::size_t next_basis = 0;
    for (std::size_t jj = 0; jj < cols; ++jj) {
        const std::size_t src = order[jj];
        out.sigma[jj] = norms[src];
        for (std::size_t i = 0; i < cols; ++i) out.v(i, jj) = v.col(src)[i];

        double* uj = u.col(jj);
        bool filled = false;
        if (norms[src] > negligible) {
            const double* gj = g.col(src);
            for (std::size_t i = 0; i < rows; ++i) uj[i] = gj[i] / norms[src];
            for (int pass = 0; pass < 2; ++pass)
                for (std::size_t prev = 0; prev < jj; ++prev) {
                    const double proj = dot(u.col(prev), uj, rows);
                    for (std::size_t i = 0; i < rows; ++i) uj[i] -= proj * u.col(prev)[i];
                }
            const double len = std::sqrt(dot(uj, uj, rows));
            if (len > 0.5) {
                for (std::size_t i = 0; i < rows; ++i) uj[i] /= len;
                filled = true;
            }
        }
        while (!filled && next_basis < rows) {
            std::fill(uj, uj + rows, 0.0);
            uj[next_basis++] = 1.0;
            for (int pass = 0; pass < 2; ++pass)
                for (std::size_t prev = 0; prev < jj; ++prev) {
                    const double proj = dot(u.col(prev), uj, rows);
                    for (std::size_t i = 0; i < rows; ++i) uj[i] -= proj * u.col(prev)[i];
                }
            const double len = std::sqrt(dot(uj, uj, rows));
            if (len > 0.5) {
                for (std::size_t i = 0; i < rows; ++i) uj[i] /= len;
                filled = true;
            }
        }
        for (std::size_t i = 0; i < rows; ++i) out.u(i, jj) = uj[i];
    }
    return out;
}

void apply_sign_convention(SvdResult& r) {
    const std::size_t rows = r.u.rows(), d = r.u.cols();
    for (std::size_t j = 0; j < d; ++j) {
        std::size_t best = 0;
        double best_abs = -1.0;
        for (std::size_t i = 0; i < rows; ++i) {
            const double a = std::abs(r.u(i, j));
            if (a > best_abs) {
                best_abs = a;
                best = i;
            }
        }
        if (r.u(best, j) < 0.0) {
            for (std::size_t i = 0; i < rows; ++i) r.u(i, j) = -r.u(i, j);
            for (std::size_t i = 0; i < r.v.rows(); ++i) r.v(i, j) = -r.v(i, j);
        }
    }
}

} // namespace

SvdResult svd(const DenseMatrix& m, const JacobiOptions& options) {
    if (m.empty()) throw Error(ErrorCode::InvalidArgument, "svd of an empty matrix");
    for (double x : m.data())
        if (!std::isfinite(x)) throw Error(ErrorCode::NonFinite, "svd input is not finite");

    SvdResult r;
    if (m.rows() >= m.cols()) {
        r = svd_tall(m, options);
    } else {
        SvdResult t = svd_tall(m.transposed(), options);
        r = SvdResult{std::move(t.v), std::move(t.sigma), std::move(t.u)};
    }
    apply_sign_convention(r);
    return r;
}

RankKFactors rank_k_factors(const SvdResult& decomposition, std::size_t k) {
    const std::size_t d = decomposition.sigma.size();
    if (k < 1 || k > d)
        throw Error(ErrorCode::InvalidRank,
                    "rank " + std::to_string(k) + " outside [1, " + std::to_string(d) + "]");
    const DenseMatrix& u = decomposition.u;
    const DenseMatrix& v = decomposition.v;
    RankKFactors f{DenseMatrix(u.rows(), k), DenseMatrix(v.rows(), k)};
    for (std::size_t j = 0; j < k; ++j) {
        const double root = std::sqrt(decomposition.sigma[j]);
        for (std::size_t i = 0; i < u.rows(); ++i) f.a(i, j) = root * u(i, j);
        for (std::size_t i = 0; i < v.rows(); ++i) f.b(i, j) = root * v(i, j);
    }
    return f;
}

RankKFactors rank_k_factors(const DenseMatrix& m, std::size_t k) {
    const std::size_t d = std::min(m.rows(), m.cols());
    if (k < 1 || k > d)
        throw Error(ErrorCode::InvalidRank,
                    "rank " + std::to_string(k) + " outside [1, " + std::to_string(d) + "]");
    return rank_k_factors(svd(m), k);
}

double frobenius_norm(const DenseMatrix& m) {
    double acc = 0.0;
    for (double x : m.data()) acc += x * x;
    return std::sqrt(acc);
}

double frobenius_distance(const DenseMatrix& a, const DenseMatrix& b) {
    if (!a.same_shape(b)) throw Error(ErrorCode::DimensionMismatch, "frobenius_distance shapes");
    double acc = 0.0;
    const auto x = a.data();
    const auto y = b.data();
    for (std::size_t i = 0; i < x.size(); ++i) acc += (x[i] - y[i]) * (x[i] - y[i]);
    return std::sqrt(acc);
}

} // namespace bitstack::linalg
