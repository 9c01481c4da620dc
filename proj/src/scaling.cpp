#include "bitstack/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bitstack/kernels.hpp"

namespace bitstack::scaling {

ScalingVector::ScalingVector(std::vector<double> values) : values_(std::move(values)) {
    for (double v : values_)
        if (!(v > 0.0) || !std::isfinite(v))
            throw Error(ErrorCode::InvalidArgument, "scaling entries must be finite and positive");
}

ScalingVector compute_scaling(const DenseMatrix& activations) {
    if (activations.rows() == 0 || activations.cols() == 0)
        throw Error(ErrorCode::InvalidArgument, "calibration activations are empty");
    std::vector<double> s = kernels::column_norms(activations);
    const double largest = *std::max_element(s.begin(), s.end());
    const double floor = largest > 0.0 ? kClampRatio * largest : kClampRatio;
    for (double& v : s) v = std::max(v, floor);
    return ScalingVector(std::move(s));
}

DenseMatrix apply_scaling(const DenseMatrix& w, const ScalingVector& s) {
    if (s.size() != w.rows())
        throw Error(ErrorCode::DimensionMismatch, "scaling length " + std::to_string(s.size()) +
                                                      " != weight rows " + std::to_string(w.rows()));
    return kernels::scale_rows(w, s.values());
}

DenseMatrix remove_scaling(const DenseMatrix& w_scaled, const ScalingVector& s) {
    if (s.size() != w_scaled.rows())
        throw Error(ErrorCode::DimensionMismatch, "scaling length != weight rows");
    std::vector<double> inverse(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) inverse[i] = 1.0 / s[i];
    return kernels::scale_rows(w_scaled, inverse);
}

DenseMatrix scaled_product(const DenseMatrix& x, const ScalingVector& s, const DenseMatrix& w_scaled) {
    if (x.cols() != s.size() || w_scaled.rows() != s.size())
        throw Error(ErrorCode::DimensionMismatch, "scaled_product: x is " +
                                                      std::to_string(x.rows()) + "x" +
                                                      std::to_string(x.cols()) + ", s has " +
                                                      std::to_string(s.size()) + " entries, w has " +
                                                      std::to_string(w_scaled.rows()) + " rows");
    DenseMatrix xs(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) xs(i, j) = x(i, j) / s[j];
    return kernels::matmul(xs, w_scaled);
}

} // namespace bitstack::scaling
