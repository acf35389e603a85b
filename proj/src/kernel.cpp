#include "klms/kernel.hpp"

#include <cmath>
#include <string>

#include "klms/errors.hpp"

namespace klms {

GaussianKernel::GaussianKernel(double bandwidth) : bandwidth_(bandwidth) {
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth))
        throw InvalidArgument("kernel bandwidth must be positive, got " + std::to_string(bandwidth));
    inv_two_sigma2_ = 1.0 / (2.0 * bandwidth * bandwidth);
}

double GaussianKernel::operator()(const Eigen::Ref<const Eigen::VectorXd>& x,
                                  const Eigen::Ref<const Eigen::VectorXd>& y) const {
    if (x.size() != y.size()) throw DimensionMismatch("kernel arguments differ in dimension");
    return from_squared_distance((x - y).squaredNorm());
}

double GaussianKernel::from_squared_distance(double d2) const noexcept {
    return std::exp(-d2 * inv_two_sigma2_);
}

}  // namespace klms
