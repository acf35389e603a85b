#pragma once

#include <Eigen/Core>
#include <optional>

namespace klms {

struct Ar1Params {
    double rho = 0.0;      ///< lag-one correlation, |rho| < 1
    double sigma_x = 1.0;  ///< stationary standard deviation
};

/// Zero-mean Gaussian law of the filter input vector.
///
/// Construction rejects non-symmetric matrices, non-positive eigenvalues and
/// condition numbers above 1e12.
class InputModel {
public:
    explicit InputModel(Eigen::MatrixXd autocorrelation);

    /// Law of the time embedding [x(n), x(n-1), ..., x(n-L+1)] of a stationary
    /// AR(1) sequence: R_ij = sigma_x^2 rho^|i-j|.
    static InputModel ar1_embedding(Ar1Params params, int dimension = 2);

    int dimension() const noexcept { return static_cast<int>(autocorrelation_.rows()); }
    const Eigen::MatrixXd& autocorrelation() const noexcept { return autocorrelation_; }
    const std::optional<Ar1Params>& generator() const noexcept { return generator_; }

    static constexpr double max_condition = 1e12;

private:
    Eigen::MatrixXd autocorrelation_;
    std::optional<Ar1Params> generator_;
};

}  // namespace klms
