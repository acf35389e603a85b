#include "klms/moments.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <array>
#include <cmath>

#include "klms/errors.hpp"
#include "parallel.hpp"

namespace klms {

namespace {

void check_input(const Dictionary& dict, const InputModel& input) {
    if (dict.dimension() != input.dimension())
        throw DimensionMismatch("dictionary dimension " + std::to_string(dict.dimension()) +
                                " differs from input dimension " + std::to_string(input.dimension()));
}

void check_index(std::size_t i, const Dictionary& dict) {
    if (i >= dict.size())
        throw InvalidArgument("dictionary index " + std::to_string(i) + " out of range");
}

// |I + (m / sigma^2) R|^(-1/2) from a Cholesky factor.
double det_factor(const Eigen::MatrixXd& R, double sigma2, int m) {
    const auto L = R.rows();
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(L, L) + (m / sigma2) * R;
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) throw SingularMatrix("I + (m/sigma^2) R is not positive definite");
    // |A|^(-1/2) = prod(diag(L))^(-1)
    return 1.0 / llt.matrixL().toDenseMatrix().diagonal().prod();
}

// Factorization of R + (sigma^2 / m) I, used for the weighted norm
// |x|^2_{(I + sigma^2 R^-1 / m)^-1} = x' (R + sigma^2/m I)^-1 R x.
Eigen::LLT<Eigen::MatrixXd> shifted_factor(const Eigen::MatrixXd& R, double sigma2, int m) {
    Eigen::MatrixXd A = R;
    A.diagonal().array() += sigma2 / m;
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) throw SingularMatrix("R + (sigma^2/m) I is not positive definite");
    return llt;
}

// E{prod_k k(x, c_k)} over m centers for x ~ N(0, R):
//   |I + m R/sigma^2|^(-1/2) exp(-(1/(2 m sigma^2)) [m sum_k |c_k|^2 - |xbar|^2_W])
// with xbar = sum_k c_k and W = (I + sigma^2 R^-1 / m)^-1.
template <std::size_t m>
double product_moment(const std::array<std::size_t, m>& idx, const Dictionary& dict,
                      const GaussianKernel& kernel, const InputModel& input) {
    check_input(dict, input);
    for (auto i : idx) check_index(i, dict);
    const double sigma2 = kernel.bandwidth() * kernel.bandwidth();
    const auto& R = input.autocorrelation();

    Eigen::VectorXd xbar = Eigen::VectorXd::Zero(dict.dimension());
    double sq = 0.0;
    for (auto i : idx) {
        xbar += dict.center(i);
        sq += dict.center(i).squaredNorm();
    }
    const Eigen::VectorXd u = shifted_factor(R, sigma2, m).solve(R * xbar);
    const double wnorm = xbar.dot(u);
    const double M = static_cast<double>(m);
    return det_factor(R, sigma2, m) * std::exp(-(M * sq - wnorm) / (2.0 * M * sigma2));
}

}  // namespace

double mgf_quadratic(const QuadraticForm& form, const Eigen::MatrixXd& covariance) {
    const auto L = covariance.rows();
    if (covariance.cols() != L || form.H.rows() != L || form.H.cols() != L || form.b.size() != L)
        throw DimensionMismatch("quadratic form and covariance dimensions differ");

    Eigen::LLT<Eigen::MatrixXd> cov_llt(covariance);
    if (cov_llt.info() != Eigen::Success) throw SingularMatrix("covariance is not positive definite");
    const Eigen::MatrixXd Lc = cov_llt.matrixL();

    // |I - 2sHR| = |I - 2s L'HL| and b'R(I - 2sHR)^-1 b = (L'b)'(I - 2s L'HL)^-1 (L'b).
    const Eigen::MatrixXd Hs = 0.5 * (form.H + form.H.transpose());
    Eigen::MatrixXd S = Eigen::MatrixXd::Identity(L, L) - 2.0 * form.s * (Lc.transpose() * Hs * Lc);
    S = 0.5 * (S + S.transpose()).eval();
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success)
        throw SingularMatrix("I - 2sHR has no positive-definite symmetric form; the MGF does not exist at s");

    const double inv_sqrt_det = 1.0 / llt.matrixL().toDenseMatrix().diagonal().prod();
    const Eigen::VectorXd Lb = Lc.transpose() * form.b;
    const double quad = Lb.dot(llt.solve(Lb));
    return inv_sqrt_det * std::exp(0.5 * form.s * form.s * quad);
}

double weighted_norm_sq(const Eigen::Ref<const Eigen::VectorXd>& v,
                        const Eigen::Ref<const Eigen::MatrixXd>& A) {
    if (A.rows() != v.size() || A.cols() != v.size())
        throw DimensionMismatch("weighted norm: matrix and vector dimensions differ");
    return v.dot(A * v);
}

double rkk_entry(std::size_t i, std::size_t j, const Dictionary& dict, const GaussianKernel& kernel,
                 const InputModel& input) {
    return product_moment<2>({i, j}, dict, kernel, input);
}

double k4_entry(std::size_t i, std::size_t j, std::size_t l, std::size_t p, const Dictionary& dict,
                const GaussianKernel& kernel, const InputModel& input) {
    return product_moment<4>({i, j, l, p}, dict, kernel, input);
}

KernelMoments::KernelMoments(const Dictionary& dict, const GaussianKernel& kernel,
                             const InputModel& input) {
    check_input(dict, input);
    sigma2_ = kernel.bandwidth() * kernel.bandwidth();
    const auto& R = input.autocorrelation();
    const auto& C = dict.centers();

    det2_ = det_factor(R, sigma2_, 2);
    det4_ = det_factor(R, sigma2_, 4);
    sq_norms_ = C.colwise().squaredNorm().transpose();

    auto gram = [&](int m) {
        Eigen::MatrixXd W = shifted_factor(R, sigma2_, m).solve(R);
        W = 0.5 * (W + W.transpose()).eval();
        Eigen::MatrixXd G = C.transpose() * W * C;
        return Eigen::MatrixXd(0.5 * (G + G.transpose()));
    };
    gram2_ = gram(2);
    gram4_ = gram(4);
}

double KernelMoments::rkk(std::size_t i, std::size_t j) const {
    const auto n = size();
    if (i >= n || j >= n) throw InvalidArgument("dictionary index out of range");
    const auto a = static_cast<Eigen::Index>(std::min(i, j));
    const auto b = static_cast<Eigen::Index>(std::max(i, j));
    const double wnorm = gram2_(a, a) + gram2_(b, b) + 2.0 * gram2_(a, b);
    const double sq = sq_norms_(a) + sq_norms_(b);
    return det2_ * std::exp(-(2.0 * sq - wnorm) / (4.0 * sigma2_));
}

double KernelMoments::k4(std::size_t i, std::size_t j, std::size_t l, std::size_t p) const {
    const auto n = size();
    if (i >= n || j >= n || l >= n || p >= n) throw InvalidArgument("dictionary index out of range");
    std::array<Eigen::Index, 4> k{static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j),
                                  static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(p)};
    std::sort(k.begin(), k.end());
    double wnorm = 0.0;
    double sq = 0.0;
    for (std::size_t a = 0; a < 4; ++a) {
        sq += sq_norms_(k[a]);
        wnorm += gram4_(k[a], k[a]);
        for (std::size_t b = a + 1; b < 4; ++b) wnorm += 2.0 * gram4_(k[a], k[b]);
    }
    return det4_ * std::exp(-(4.0 * sq - wnorm) / (8.0 * sigma2_));
}

Eigen::MatrixXd rkk_matrix(const Dictionary& dict, const GaussianKernel& kernel,
                           const InputModel& input) {
    const KernelMoments table(dict, kernel, input);
    const auto M = static_cast<Eigen::Index>(dict.size());
    Eigen::MatrixXd R(M, M);
    for (Eigen::Index i = 0; i < M; ++i)
        for (Eigen::Index j = i; j < M; ++j) R(i, j) = R(j, i) = table.rkk(i, j);
    return R;
}

Eigen::MatrixXd k4_arrangement(const Dictionary& dict, const GaussianKernel& kernel,
                               const InputModel& input) {
    const KernelMoments table(dict, kernel, input);
    const std::size_t M = dict.size();
    const auto M2 = static_cast<Eigen::Index>(M * M);
    Eigen::MatrixXd g3(M2, M2);
    // Column (l + p M) is the vectorized K^(l,p); filled column by column.
    detail::parallel_for(M * M, [&](std::size_t col) {
        const std::size_t l = col % M;
        const std::size_t p = col / M;
        for (std::size_t j = 0; j < M; ++j)
            for (std::size_t i = 0; i < M; ++i)
                g3(static_cast<Eigen::Index>(i + j * M), static_cast<Eigen::Index>(col)) =
                    table.k4(i, j, l, p);
    });
    return g3;
}

}  // namespace klms
