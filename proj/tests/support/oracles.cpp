#include "oracles.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace klms::oracle {

namespace {

double sum_sq_dist(const Eigen::VectorXd& x, const std::vector<Eigen::VectorXd>& centers) {
    double s = 0.0;
    for (const auto& c : centers) s += (x - c).squaredNorm();
    return s;
}

Estimate finish(double sum, double sumsq, std::size_t n) {
    const double N = static_cast<double>(n);
    const double mean = sum / N;
    const double var = std::max(0.0, sumsq / N - mean * mean);
    return {mean, std::sqrt(var / N)};
}

}  // namespace

Estimate kernel_product_mc(const std::vector<Eigen::VectorXd>& centers, double sigma,
                           const Eigen::MatrixXd& R, std::size_t draws, std::uint64_t seed) {
    const auto L = R.rows();
    const double m = static_cast<double>(centers.size());
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(L);
    for (const auto& c : centers) centroid += c;
    centroid /= m;
    const double tau = sigma / std::sqrt(m);

    Eigen::LLT<Eigen::MatrixXd> llt(R);
    const Eigen::MatrixXd Rinv = llt.solve(Eigen::MatrixXd::Identity(L, L));
    const double log_det_R = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    // log N(x; 0, R) - log N(x; centroid, tau^2 I), constant parts.
    const double log_const = -0.5 * log_det_R + L * std::log(tau);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    Eigen::VectorXd z(L), x(L);
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t n = 0; n < draws; ++n) {
        for (Eigen::Index a = 0; a < L; ++a) z(a) = normal(rng);
        x = centroid + tau * z;
        const double log_w = -sum_sq_dist(x, centers) / (2.0 * sigma * sigma) - 0.5 * x.dot(Rinv * x) +
                             0.5 * z.squaredNorm() + log_const;
        const double w = std::exp(log_w);
        sum += w;
        sumsq += w * w;
    }
    return finish(sum, sumsq, draws);
}

KernelProductSampler::KernelProductSampler(const Eigen::MatrixXd& R, double sigma, std::size_t draws,
                                           std::uint64_t seed)
    : sigma_(sigma), z_(R.rows(), static_cast<Eigen::Index>(draws)) {
    Eigen::LLT<Eigen::MatrixXd> llt(R);
    Rinv_ = llt.solve(Eigen::MatrixXd::Identity(R.rows(), R.rows()));
    log_det_R_ = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    for (Eigen::Index k = 0; k < z_.size(); ++k) z_.data()[k] = normal(rng);
}

Estimate KernelProductSampler::operator()(const std::vector<Eigen::VectorXd>& centers) const {
    const auto L = z_.rows();
    const double m = static_cast<double>(centers.size());
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(L);
    for (const auto& c : centers) centroid += c;
    centroid /= m;
    const double tau = sigma_ / std::sqrt(m);
    const double log_const = -0.5 * log_det_R_ + L * std::log(tau);
    const double inv2s2 = 1.0 / (2.0 * sigma_ * sigma_);

    double sum = 0.0, sumsq = 0.0;
    if (L == 2) {
        // Fixed-size path; same terms as below.
        const Eigen::Matrix2d Rinv = Rinv_;
        const Eigen::Vector2d cbar = centroid;
        std::vector<Eigen::Vector2d> cs(centers.begin(), centers.end());
        for (Eigen::Index n = 0; n < z_.cols(); ++n) {
            const Eigen::Vector2d z = z_.col(n);
            const Eigen::Vector2d x = cbar + tau * z;
            double ssd = 0.0;
            for (const auto& c : cs) ssd += (x - c).squaredNorm();
            const double w = std::exp(-ssd * inv2s2 - 0.5 * x.dot(Rinv * x) + 0.5 * z.squaredNorm() + log_const);
            sum += w;
            sumsq += w * w;
        }
        return finish(sum, sumsq, static_cast<std::size_t>(z_.cols()));
    }
    Eigen::VectorXd x(L), Rx(L);
    for (Eigen::Index n = 0; n < z_.cols(); ++n) {
        x.noalias() = centroid + tau * z_.col(n);
        Rx.noalias() = Rinv_ * x;
        double ssd = 0.0;
        for (const auto& c : centers) ssd += (x - c).squaredNorm();
        const double log_w = -ssd * inv2s2 - 0.5 * x.dot(Rx) + 0.5 * z_.col(n).squaredNorm() + log_const;
        const double w = std::exp(log_w);
        sum += w;
        sumsq += w * w;
    }
    return finish(sum, sumsq, static_cast<std::size_t>(z_.cols()));
}

Estimate gaussian_expectation_mc(const std::function<double(const Eigen::VectorXd&)>& g,
                                 const Eigen::MatrixXd& R, std::size_t draws, std::uint64_t seed) {
    const auto L = R.rows();
    const Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(R).matrixL();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    Eigen::VectorXd z(L);
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t n = 0; n < draws; ++n) {
        for (Eigen::Index a = 0; a < L; ++a) z(a) = normal(rng);
        const double v = g(chol * z);
        sum += v;
        sumsq += v * v;
    }
    return finish(sum, sumsq, draws);
}

Estimate kernel_product_plain_mc(const std::vector<Eigen::VectorXd>& centers, double sigma,
                                 const Eigen::MatrixXd& R, std::size_t draws, std::uint64_t seed) {
    const double inv = 1.0 / (2.0 * sigma * sigma);
    return gaussian_expectation_mc([&](const Eigen::VectorXd& x) { return std::exp(-sum_sq_dist(x, centers) * inv); },
                                   R, draws, seed);
}

double kernel_product_quadrature(const std::vector<Eigen::VectorXd>& centers, double sigma,
                                 const Eigen::MatrixXd& R) {
    using boost::math::quadrature::gauss_kronrod;
    const auto L = R.rows();
    const double inv = 1.0 / (2.0 * sigma * sigma);
    const double spread = std::sqrt(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(R).eigenvalues().maxCoeff());
    double reach = 0.0;
    for (const auto& c : centers) reach = std::max(reach, c.cwiseAbs().maxCoeff());
    const double B = 10.0 * spread + reach;

    Eigen::LLT<Eigen::MatrixXd> llt(R);
    const Eigen::MatrixXd Rinv = llt.solve(Eigen::MatrixXd::Identity(L, L));
    const double norm = 1.0 / (std::pow(2.0 * std::numbers::pi, 0.5 * double(L)) *
                               llt.matrixL().toDenseMatrix().diagonal().prod());

    auto integrand = [&](const Eigen::VectorXd& x) {
        return norm * std::exp(-sum_sq_dist(x, centers) * inv - 0.5 * x.dot(Rinv * x));
    };
    constexpr unsigned depth = 20;
    constexpr double tol = 1e-9;
    if (L == 1) {
        return gauss_kronrod<double, 31>::integrate(
            [&](double t) { return integrand(Eigen::VectorXd::Constant(1, t)); }, -B, B, depth, tol);
    }
    if (L == 2) {
        std::vector<std::array<double, 2>> cs;
        for (const auto& c : centers) cs.push_back({c(0), c(1)});
        const double a = Rinv(0, 0), b = Rinv(0, 1), d = Rinv(1, 1);
        auto f = [&](double x1, double x2) {
            double ssd = 0.0;
            for (const auto& c : cs) ssd += (x1 - c[0]) * (x1 - c[0]) + (x2 - c[1]) * (x2 - c[1]);
            return norm * std::exp(-ssd * inv - 0.5 * (a * x1 * x1 + 2.0 * b * x1 * x2 + d * x2 * x2));
        };
        // Every kernel factor is below exp(-50) farther than 10 sigma from its
        // center, so the box shrinks to the intersection of those windows.
        double lo[2] = {-B, -B}, hi[2] = {B, B};
        for (const auto& c : cs)
            for (int k = 0; k < 2; ++k) {
                lo[k] = std::max(lo[k], c[k] - 10.0 * sigma);
                hi[k] = std::min(hi[k], c[k] + 10.0 * sigma);
            }
        if (lo[0] >= hi[0] || lo[1] >= hi[1]) return 0.0;
        auto inner = [&](double x1) {
            return gauss_kronrod<double, 31>::integrate([&](double x2) { return f(x1, x2); }, lo[1], hi[1], depth,
                                                        tol);
        };
        return gauss_kronrod<double, 31>::integrate(inner, lo[0], hi[0], depth, tol);
    }
    throw std::invalid_argument("quadrature oracle supports L = 1 or 2");
}

Eigen::MatrixXd covariance_step_direct(
    const Eigen::MatrixXd& C, const Eigen::MatrixXd& R,
    const std::function<double(std::size_t, std::size_t, std::size_t, std::size_t)>& k4, double eta,
    double min_mse) {
    const auto M = static_cast<std::size_t>(C.rows());
    Eigen::MatrixXd out(C.rows(), C.cols());
    for (std::size_t i = 0; i < M; ++i) {
        for (std::size_t j = 0; j < M; ++j) {
            double rc = 0.0, cr = 0.0, t = 0.0;
            for (std::size_t k = 0; k < M; ++k) {
                rc += R(i, k) * C(k, j);
                cr += C(i, k) * R(k, j);
            }
            for (std::size_t l = 0; l < M; ++l)
                for (std::size_t p = 0; p < M; ++p) t += k4(i, j, l, p) * C(l, p);
            out(i, j) = C(i, j) - eta * (rc + cr) + eta * eta * t + eta * eta * min_mse * R(i, j);
        }
    }
    return out;
}

K4Table tabulate_k4(std::size_t M,
                    const std::function<double(std::size_t, std::size_t, std::size_t, std::size_t)>& k4) {
    K4Table t;
    t.M = M;
    t.values.resize(M * M * M * M);
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t j = 0; j < M; ++j)
            for (std::size_t l = 0; l < M; ++l)
                for (std::size_t p = 0; p < M; ++p) t.values[((i * M + j) * M + l) * M + p] = k4(i, j, l, p);
    return t;
}

Eigen::MatrixXd random_psd(std::size_t M, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    const auto n = static_cast<Eigen::Index>(M);
    Eigen::MatrixXd A(n, n);
    for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = normal(rng);
    return A * A.transpose() / double(M);
}

Eigen::MatrixXd random_symmetric(std::size_t M, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    const auto n = static_cast<Eigen::Index>(M);
    Eigen::MatrixXd A(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i; j < n; ++j) A(i, j) = A(j, i) = normal(rng);
    return A;
}

}  // namespace klms::oracle
