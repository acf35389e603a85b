#include "klms/input_model.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <string>

#include "klms/errors.hpp"

namespace klms {

InputModel::InputModel(Eigen::MatrixXd autocorrelation)
    : autocorrelation_(std::move(autocorrelation)) {
    const auto& R = autocorrelation_;
    if (R.rows() < 1 || R.rows() != R.cols())
        throw DimensionMismatch("autocorrelation must be a non-empty square matrix");
    if (!R.allFinite()) throw InvalidArgument("autocorrelation has non-finite entries");
    const double scale = R.cwiseAbs().maxCoeff();
    if ((R - R.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
        throw InvalidArgument("autocorrelation is not symmetric");

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(R, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0.0)) throw SingularMatrix("autocorrelation is not positive definite");
    if (hi / lo > max_condition)
        throw IllConditioned("autocorrelation condition number " + std::to_string(hi / lo) +
                             " exceeds 1e12");
}

InputModel InputModel::ar1_embedding(Ar1Params params, int dimension) {
    if (!(std::abs(params.rho) < 1.0)) throw InvalidArgument("AR(1) correlation must satisfy |rho| < 1");
    if (!(params.sigma_x > 0.0)) throw InvalidArgument("AR(1) sigma_x must be positive");
    if (dimension < 1) throw InvalidArgument("embedding dimension must be >= 1");

    Eigen::MatrixXd R(dimension, dimension);
    const double var = params.sigma_x * params.sigma_x;
    for (int i = 0; i < dimension; ++i)
        for (int j = 0; j < dimension; ++j) R(i, j) = var * std::pow(params.rho, std::abs(i - j));
    InputModel model(std::move(R));
    model.generator_ = params;
    return model;
}

}  // namespace klms
