#pragma once

#include <span>
#include <vector>

#include "bitstack/matrix.hpp"

namespace bitstack::scaling {

/// Relative floor applied to channel norms: s_j >= kClampRatio * max_j s_j.
inline constexpr double kClampRatio = 1e-8;

/// Per-input-channel scale, strictly positive.
class ScalingVector {
public:
    ScalingVector() = default;
    explicit ScalingVector(std::vector<double> values);

    static ScalingVector ones(std::size_t n) { return ScalingVector(std::vector<double>(n, 1.0)); }

    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t i) const noexcept { return values_[i]; }
    std::span<const double> values() const noexcept { return values_; }

    friend bool operator==(const ScalingVector&, const ScalingVector&) = default;

private:
    std::vector<double> values_;
};

/// Channel-wise l2 norms of the p x m activations, clamped below at
/// kClampRatio * max (or kClampRatio when every channel is zero).
ScalingVector compute_scaling(const DenseMatrix& activations);

/// diag(s) * w.
DenseMatrix apply_scaling(const DenseMatrix& w, const ScalingVector& s);

/// diag(1/s) * w_scaled, the inverse of apply_scaling.
DenseMatrix remove_scaling(const DenseMatrix& w_scaled, const ScalingVector& s);

/// (x * diag(1/s)) * w_scaled.
DenseMatrix scaled_product(const DenseMatrix& x, const ScalingVector& s, const DenseMatrix& w_scaled);

} // namespace bitstack::scaling
