#pragma once

#include <Eigen/Core>

namespace klms {

/// Gaussian kernel k(x, y) = exp(-|x - y|^2 / (2 sigma^2)).
class GaussianKernel {
public:
    explicit GaussianKernel(double bandwidth);

    double bandwidth() const noexcept { return bandwidth_; }

    double operator()(const Eigen::Ref<const Eigen::VectorXd>& x,
                      const Eigen::Ref<const Eigen::VectorXd>& y) const;

    /// Kernel value for a precomputed squared distance.
    double from_squared_distance(double d2) const noexcept;

private:
    double bandwidth_;
    double inv_two_sigma2_;
};

}  // namespace klms
