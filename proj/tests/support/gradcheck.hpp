#pragma once

// Central-difference gradient oracle. Everything runs in double so the FD
// truncation error, not float rounding, sets the comparison floor.

#include <cmath>
#include <functional>

#include "driveby/tensor.hpp"

namespace gradcheck {

inline double fd_derivative(const std::function<double()>& loss, double& param,
                            double eps = 1e-6) {
    const double orig = param;
    param = orig + eps;
    const double lp = loss();
    param = orig - eps;
    const double lm = loss();
    param = orig;
    return (lp - lm) / (2.0 * eps);
}

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// Checks every entry of a tensor's analytic gradient against the FD oracle;
// returns the worst relative error.
inline double check_tensor(const std::function<double()>& loss, driveby::nn::TensorD& values,
                           const driveby::nn::TensorD& analytic_grad, double eps = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < values.numel(); ++i) {
        const double fd = fd_derivative(loss, values[i], eps);
        worst = std::max(worst, rel_err(analytic_grad[i], fd));
    }
    return worst;
}

// Same, probing only every stride-th entry (for larger tensors).
inline double check_tensor_strided(const std::function<double()>& loss,
                                   driveby::nn::TensorD& values,
                                   const driveby::nn::TensorD& analytic_grad, std::size_t stride,
                                   double eps = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < values.numel(); i += stride) {
        const double fd = fd_derivative(loss, values[i], eps);
        worst = std::max(worst, rel_err(analytic_grad[i], fd));
    }
    return worst;
}

} // namespace gradcheck
