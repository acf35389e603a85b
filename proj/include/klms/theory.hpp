#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "klms/dictionary.hpp"
#include "klms/input_model.hpp"
#include "klms/kernel.hpp"
#include "klms/moments.hpp"

namespace klms {

/// Draws one stationary (x, y) pair: fills x and returns y.
using SampleSource = std::function<double(Eigen::Ref<Eigen::VectorXd>)>;

struct OptimalSolution {
    Eigen::VectorXd cross_correlation;  ///< p = E{y kappa}
    Eigen::VectorXd optimal_weights;    ///< R^-1 p
    double min_mse = 0.0;               ///< E{y^2} - p' R^-1 p
    double output_power = 0.0;          ///< E{y^2}
    double min_mse_stderr = 0.0;        ///< bootstrap standard error of min_mse
    std::size_t samples = 0;
};

struct EstimateOptions {
    std::size_t batches = 100;     ///< contiguous batches resampled by the bootstrap
    std::size_t resamples = 200;
    std::uint64_t seed = 0;
    static constexpr double max_condition = 1e12;
};

/// Solves R alpha = p with the closed-form R and the given moments.
/// Throws IllConditioned when cond(R) > 1e12.
OptimalSolution solve_optimal(const Eigen::MatrixXd& rkk, const Eigen::VectorXd& cross_correlation,
                              double output_power);

/// Sample estimate of p and E{y^2} over `n_samples` draws, combined with the
/// closed-form R. The bootstrap resamples contiguous batches so serially
/// correlated sources are handled.
OptimalSolution estimate_optimal(const Dictionary& dict, const GaussianKernel& kernel,
                                 const InputModel& input, const SampleSource& source,
                                 std::size_t n_samples, EstimateOptions options = {});

/// 2 / lambda_max(R).
double mean_stability_bound(const Eigen::MatrixXd& rkk);

/// Spectral radius of I - eta R for symmetric R.
double mean_iteration_radius(const Eigen::MatrixXd& rkk, double eta);

/// I (x) R
Eigen::MatrixXd kron_identity_left(const Eigen::MatrixXd& rkk);
/// R (x) I
Eigen::MatrixXd kron_identity_right(const Eigen::MatrixXd& rkk);

/// G = I - eta (I (x) R + R (x) I) + eta^2 G3, with G3 from k4_arrangement().
Eigen::MatrixXd build_G(const Eigen::MatrixXd& rkk, const Eigen::MatrixXd& g3, double eta);

/// Spectral radius of a symmetric matrix.
double symmetric_spectral_radius(const Eigen::MatrixXd& symmetric);

struct ModelOptions {
    /// Largest dictionary for which G is stored densely (M^2 x M^2).
    std::size_t max_dense_size = 80;
    /// Krylov dimension cap for the spectral radius in matrix-free mode.
    std::size_t lanczos_steps = 400;
};

/// Analytical model of the KLMS filter for one dictionary and step size.
class TheoryModel {
public:
    /// Dense model from precomputed R and G3.
    TheoryModel(Eigen::MatrixXd rkk, Eigen::MatrixXd g3, double step_size, OptimalSolution optimal);

    /// Dense when dict.size() <= options.max_dense_size, matrix-free otherwise.
    static TheoryModel build(const Dictionary& dict, const GaussianKernel& kernel,
                             const InputModel& input, double step_size, OptimalSolution optimal,
                             ModelOptions options = {});

    std::size_t size() const noexcept { return static_cast<std::size_t>(rkk_.rows()); }
    double step_size() const noexcept { return step_size_; }
    const Eigen::MatrixXd& rkk() const noexcept { return rkk_; }
    const OptimalSolution& optimal() const noexcept { return optimal_; }
    double lambda_max() const noexcept { return lambda_max_; }
    double spectral_radius() const noexcept { return spectral_radius_; }

    bool dense() const noexcept { return g3_.has_value(); }
    /// Throws InvalidArgument in matrix-free mode.
    const Eigen::MatrixXd& G() const;
    const Eigen::MatrixXd& G3() const;

    /// G vec(C) for a column-stacked M^2 vector.
    Eigen::VectorXd apply_G(const Eigen::VectorXd& c) const;

    /// The G3 term unvec(G3 vec(C)), i.e. [T]_ij = trace{K^(i,j) C}.
    Eigen::MatrixXd fourth_moment_term(const Eigen::MatrixXd& C) const;

private:
    TheoryModel() = default;

    double step_size_ = 0.0;
    Eigen::MatrixXd rkk_;
    OptimalSolution optimal_;
    std::optional<Eigen::MatrixXd> g3_;
    std::optional<Eigen::MatrixXd> G_;
    std::shared_ptr<const KernelMoments> moments_;
    double lambda_max_ = 0.0;
    double spectral_radius_ = 0.0;
};

/// E{v(n+1)} = (I - eta R) E{v(n)}; returns horizon + 1 iterates starting at v0.
std::vector<Eigen::VectorXd> mean_weight_recursion(const TheoryModel& model,
                                                   const Eigen::VectorXd& v0,
                                                   std::size_t horizon);

struct MsStability {
    bool stable = false;
    double spectral_radius = 0.0;
};

/// Mean-square stable iff the spectral radius of G is below one.
MsStability ms_stability(const TheoryModel& model);

inline constexpr double divergence_trace = 1e12;

/// Visits C(0), ..., C(horizon) of
///   vec C(n+1) = G vec C(n) + eta^2 J_min vec R.
/// Throws Diverged when the trace exceeds 1e12 or turns non-finite.
void iterate_covariance(const TheoryModel& model, const Eigen::MatrixXd& C0, double min_mse,
                        std::size_t horizon,
                        const std::function<void(std::size_t, const Eigen::MatrixXd&)>& visit);

std::vector<Eigen::MatrixXd> covariance_recursion(const TheoryModel& model,
                                                  const Eigen::MatrixXd& C0, double min_mse,
                                                  std::size_t horizon);

/// One step of the recursion in matrix form.
Eigen::MatrixXd covariance_step(const TheoryModel& model, const Eigen::MatrixXd& C, double min_mse);

struct SteadyState {
    Eigen::MatrixXd covariance;
    double mse = 0.0;
};

/// Fixed point c = eta^2 J_min (I - G)^-1 vec R. Throws Unstable when the
/// spectral radius of G is not below one.
SteadyState steady_state(const TheoryModel& model, double min_mse);

struct PredictedCurve {
    std::vector<double> mse;   ///< J_min + trace{R C(n)}, n = 0..horizon-1
    std::vector<double> emse;  ///< trace{R C(n)}
    double steady_state_mse = std::numeric_limits<double>::quiet_NaN();
    std::size_t horizon = 0;
};

/// Learning curve from C(0) = C0 using the model's J_min. steady_state_mse
/// stays NaN when the model is not mean-square stable.
PredictedCurve predict_curve(const TheoryModel& model, const Eigen::MatrixXd& C0,
                             std::size_t horizon);

/// CSV with header "n,mse_theory,emse_theory".
void write_predicted_curve(std::ostream& os, const PredictedCurve& curve);
PredictedCurve read_predicted_curve(std::istream& is);

}  // namespace klms
