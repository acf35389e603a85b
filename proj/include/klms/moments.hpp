#pragma once

#include <Eigen/Core>
#include <cstddef>

#include "klms/dictionary.hpp"
#include "klms/input_model.hpp"
#include "klms/kernel.hpp"

namespace klms {

/// zeta = xi' H xi + b' xi for a zero-mean Gaussian vector xi, evaluated at s.
struct QuadraticForm {
    Eigen::MatrixXd H;
    Eigen::VectorXd b;
    double s = 0.0;
};

/// Moment generating function E{exp(s zeta)} of a Gaussian quadratic form:
///
///   |I - 2sHR|^(-1/2) * exp(s^2/2 * b' R (I - 2sHR)^(-1) b)
///
/// Evaluated through the symmetric matrix I - 2s L'HL with R = LL'. Throws
/// SingularMatrix when that matrix is not positive definite, i.e. when the
/// expectation does not exist.
double mgf_quadratic(const QuadraticForm& form, const Eigen::MatrixXd& covariance);

/// v' A v
double weighted_norm_sq(const Eigen::Ref<const Eigen::VectorXd>& v,
                        const Eigen::Ref<const Eigen::MatrixXd>& A);

/// E{k(x, c_i) k(x, c_j)} for x ~ N(0, R).
double rkk_entry(std::size_t i, std::size_t j, const Dictionary& dict,
                 const GaussianKernel& kernel, const InputModel& input);

/// E{k(x, c_i) k(x, c_j) k(x, c_l) k(x, c_p)} for x ~ N(0, R).
double k4_entry(std::size_t i, std::size_t j, std::size_t l, std::size_t p,
                const Dictionary& dict, const GaussianKernel& kernel, const InputModel& input);

/// Precomputed tables for bulk evaluation of second and fourth order kernel
/// moments over one dictionary. Entries are evaluated on sorted index tuples,
/// so rkk(i, j) == rkk(j, i) and k4 is invariant under index permutation
/// bit for bit.
class KernelMoments {
public:
    KernelMoments(const Dictionary& dict, const GaussianKernel& kernel, const InputModel& input);

    std::size_t size() const noexcept { return static_cast<std::size_t>(sq_norms_.size()); }

    double rkk(std::size_t i, std::size_t j) const;
    double k4(std::size_t i, std::size_t j, std::size_t l, std::size_t p) const;

private:
    double sigma2_;
    double det2_;  // |I + 2R/sigma^2|^(-1/2)
    double det4_;  // |I + 4R/sigma^2|^(-1/2)
    Eigen::VectorXd sq_norms_;
    Eigen::MatrixXd gram2_;  // c_a' (I + sigma^2 R^-1 / 2)^-1 c_b
    Eigen::MatrixXd gram4_;  // c_a' (I + sigma^2 R^-1 / 4)^-1 c_b
};

/// Correlation matrix of the kernelized input. Symmetric by construction.
Eigen::MatrixXd rkk_matrix(const Dictionary& dict, const GaussianKernel& kernel,
                           const InputModel& input);

/// The M^2 x M^2 arrangement of fourth-order moments with
/// entry (i + j*M, l + p*M) = E{k_i k_j k_l k_p} (zero-based, column stacking).
Eigen::MatrixXd k4_arrangement(const Dictionary& dict, const GaussianKernel& kernel,
                               const InputModel& input);

}  // namespace klms
