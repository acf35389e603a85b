#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "klms/dictionary.hpp"
#include "klms/filter.hpp"
#include "klms/input_model.hpp"
#include "klms/kernel.hpp"
#include "klms/random.hpp"
#include "klms/theory.hpp"

namespace klms {

/// Filter inputs are the embedding [x(n), x(n-1)].
inline constexpr int embedding_dimension = 2;

/// Stationary AR(1) sequence x(n) = rho x(n-1) + sigma_x sqrt(1 - rho^2) w(n).
class Ar1Source {
public:
    Ar1Source(Ar1Params params, std::uint64_t seed);

    const Ar1Params& params() const noexcept { return params_; }
    /// Next sample; the first call returns a draw from the stationary law.
    double next();

private:
    Ar1Params params_;
    Rng rng_;
    std::normal_distribution<double> normal_;
    double state_ = 0.0;
    bool started_ = false;
};

enum class SystemKind { wiener_poly, fluid_flow, kernel_expansion };

const char* to_string(SystemKind kind);
SystemKind system_kind_from_string(const std::string& name);

/// Plant driven by the embedded input. Plant state (past outputs) lives here;
/// observation noise is supplied by the caller.
class BenchmarkSystem {
public:
    /// u = 0.5 x(n) - 0.3 x(n-1); y = u - 0.5 u^2 + 0.1 u^3 + v.
    static BenchmarkSystem wiener_poly(double noise_std);
    /// u = 0.1044 x(n) + 0.0883 x(n-1) + 1.4138 y(n-1) - 0.6065 y(n-2);
    /// y = 0.3163 u / sqrt(0.10 + 0.90 u^2) + v.
    static BenchmarkSystem fluid_flow(double noise_std);
    /// y = sum_i a_i k(x, c_i) + v; realizable by a filter on the same dictionary.
    static BenchmarkSystem kernel_expansion(Dictionary dict, GaussianKernel kernel,
                                            Eigen::VectorXd coefficients, double noise_std);

    SystemKind kind() const noexcept { return kind_; }
    double noise_std() const noexcept { return noise_std_; }

    /// Output for the embedded input x = [x(n), x(n-1)] and noise sample v(n).
    double respond(const Eigen::Ref<const Eigen::VectorXd>& x, double noise);
    /// Clears past outputs (y(-1) = y(-2) = 0).
    void reset() noexcept;

private:
    BenchmarkSystem(SystemKind kind, double noise_std);

    SystemKind kind_;
    double noise_std_;
    double y1_ = 0.0;
    double y2_ = 0.0;
    std::optional<Dictionary> dict_;
    std::optional<GaussianKernel> kernel_;
    Eigen::VectorXd coefficients_;
};

/// Seeded (x, y) generator: AR(1) input, embedding, plant and Gaussian noise.
class SignalStream {
public:
    SignalStream(Ar1Params input, BenchmarkSystem system, std::uint64_t seed);

    /// Fills x with [x(n), x(n-1)] and returns y(n).
    double next(Eigen::Ref<Eigen::VectorXd> x);

private:
    Ar1Source source_;
    BenchmarkSystem system_;
    Rng noise_rng_;
    std::normal_distribution<double> normal_;
    double previous_;
};

std::vector<Sample> generate(Ar1Params input, const BenchmarkSystem& system, std::uint64_t seed,
                             std::size_t n);

struct ExperimentConfig {
    Ar1Params input;
    BenchmarkSystem system;
    Dictionary dict;
    GaussianKernel kernel;
    double step_size;
    std::size_t horizon = 5000;
    std::uint64_t seed = 1;
    std::optional<Eigen::VectorXd> initial_weights;  ///< zeros when absent
};

struct LearningCurve {
    std::vector<double> mse_empirical;  ///< mean of e^2(n) over runs
    std::vector<double> mse_variance;   ///< sample variance of e^2(n) over runs
    std::vector<double> run_tail_mse;   ///< per run, mean e^2 over the last 10%
    std::size_t runs = 0;
    std::size_t horizon = 0;
    std::optional<std::vector<double>> mse_theory;

    /// Mean of the last 10% of the smoothed curve (window 100).
    double steady_state() const;
    /// Standard error of the steady-state estimate across runs.
    double steady_state_stderr() const;
};

inline constexpr std::size_t default_smoothing_window = 100;
inline constexpr double steady_state_fraction = 0.1;

/// Centered moving average; the window shrinks at the ends.
std::vector<double> smooth(std::span<const double> values, std::size_t window);
/// Mean of the last `fraction` of the values (at least one element).
double tail_mean(std::span<const double> values, double fraction = steady_state_fraction);

/// Runs `runs` independent filters (seed derived from the master seed and the
/// run index) and averages e^2(n). Runs execute in parallel; the reduction is
/// in run order. Throws Diverged carrying the run index on filter divergence.
LearningCurve monte_carlo(const ExperimentConfig& config, std::size_t runs);

/// Sample means of alpha(n) across runs for n = 0..horizon. Runs that diverge
/// contribute their frozen weights; `diverged_runs` counts them.
struct MeanWeightTrajectory {
    std::vector<Eigen::VectorXd> mean;
    std::vector<Eigen::VectorXd> standard_error;
    std::size_t diverged_runs = 0;
};
MeanWeightTrajectory mean_weight_trajectory(const ExperimentConfig& config, std::size_t runs);

struct TheoryOptions {
    std::size_t samples = 1'000'000;
    std::size_t warmup = 1000;
    ModelOptions model;
};

struct ExperimentTheory {
    InputModel input;
    TheoryModel model;
    Eigen::MatrixXd initial_covariance;  ///< (alpha(0) - alpha*)(alpha(0) - alpha*)'
};

/// Closed-form moments plus a seeded estimate of p and E{y^2} from a long
/// stationary realization of the configured plant.
ExperimentTheory build_theory(const ExperimentConfig& config, TheoryOptions options = {});

struct CompareOptions {
    double steady_state_tolerance = 0.05;
    double transient_tolerance = 0.10;
    std::size_t window = default_smoothing_window;
    std::vector<std::size_t> checkpoints{200, 500, 1000, 2000};
};

struct CheckpointDeviation {
    std::size_t n = 0;
    double empirical = 0.0;
    double theory = 0.0;
    double relative_deviation = 0.0;
};

struct ComparisonReport {
    double steady_state_empirical = 0.0;
    double steady_state_theory = 0.0;
    double steady_state_relative_error = 0.0;
    std::vector<CheckpointDeviation> checkpoints;
    double transient_max_deviation = 0.0;
    bool steady_state_pass = false;
    bool transient_pass = false;
    bool pass = false;
};

/// Relative errors are taken against the empirical value. Throws
/// HorizonMismatch when the curves differ in length.
ComparisonReport compare(const LearningCurve& curve, const PredictedCurve& predicted,
                         const CompareOptions& options = {});

/// CSV with header "n,mse_empirical,mse_theory"; the theory column is empty
/// when absent.
void write_learning_curve(std::ostream& os, const LearningCurve& curve);
LearningCurve read_learning_curve(std::istream& is);
/// "key = value" lines.
void write_comparison_report(std::ostream& os, const ComparisonReport& report,
                             const CompareOptions& options);

/// The two published benchmark setups.
struct ExperimentSetup {
    ExperimentConfig config;
    std::optional<CoherenceSweep> sweep;  ///< coherence dictionaries only
};

/// Polynomial Wiener plant, 5x5 grid on [-1,1]^2, sigma = 0.25,
/// sigma_x = 0.5, rho = 0.5, eta = 0.05, sigma_v = 0.05.
ExperimentSetup experiment1(std::uint64_t seed = 1);
/// Fluid-flow plant, 37-center coherence dictionary, sigma = 0.15,
/// sigma_x = 0.25, rho = 0.5, eta = 0.05, sigma_v = 0.05.
ExperimentSetup experiment2(std::uint64_t seed = 1);

inline constexpr std::size_t coherence_stream_length = 5000;

/// Input vectors of a seeded stream, as fed to the coherence criterion.
std::vector<Eigen::VectorXd> input_stream(Ar1Params input, std::uint64_t seed, std::size_t n);

}  // namespace klms
