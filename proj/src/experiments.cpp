#include "klms/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "klms/errors.hpp"
#include "parallel.hpp"

namespace klms {

Ar1Source::Ar1Source(Ar1Params params, std::uint64_t seed) : params_(params), rng_(seed) {
    if (!(std::abs(params.rho) < 1.0)) throw InvalidArgument("AR(1) correlation must satisfy |rho| < 1");
    if (!(params.sigma_x >= 0.0)) throw InvalidArgument("AR(1) sigma_x must be non-negative");
}

double Ar1Source::next() {
    const double w = normal_(rng_);
    if (!started_) {
        started_ = true;
        state_ = params_.sigma_x * w;
    } else {
        state_ = params_.rho * state_ + params_.sigma_x * std::sqrt(1.0 - params_.rho * params_.rho) * w;
    }
    return state_;
}

const char* to_string(SystemKind kind) {
    switch (kind) {
        case SystemKind::wiener_poly: return "wiener_poly";
        case SystemKind::fluid_flow: return "fluid_flow";
        case SystemKind::kernel_expansion: return "kernel_expansion";
    }
    return "unknown";
}

SystemKind system_kind_from_string(const std::string& name) {
    if (name == "wiener_poly") return SystemKind::wiener_poly;
    if (name == "fluid_flow") return SystemKind::fluid_flow;
    if (name == "kernel_expansion") return SystemKind::kernel_expansion;
    throw InvalidArgument("unknown system '" + name + "' (expected wiener_poly or fluid_flow)");
}

BenchmarkSystem::BenchmarkSystem(SystemKind kind, double noise_std) : kind_(kind), noise_std_(noise_std) {
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std))
        throw InvalidArgument("noise standard deviation must be finite and non-negative");
}

BenchmarkSystem BenchmarkSystem::wiener_poly(double noise_std) {
    return BenchmarkSystem(SystemKind::wiener_poly, noise_std);
}

BenchmarkSystem BenchmarkSystem::fluid_flow(double noise_std) {
    return BenchmarkSystem(SystemKind::fluid_flow, noise_std);
}

BenchmarkSystem BenchmarkSystem::kernel_expansion(Dictionary dict, GaussianKernel kernel,
                                                  Eigen::VectorXd coefficients, double noise_std) {
    if (coefficients.size() != static_cast<Eigen::Index>(dict.size()))
        throw DimensionMismatch("kernel expansion needs one coefficient per center");
    BenchmarkSystem s(SystemKind::kernel_expansion, noise_std);
    s.dict_ = std::move(dict);
    s.kernel_ = kernel;
    s.coefficients_ = std::move(coefficients);
    return s;
}

double BenchmarkSystem::respond(const Eigen::Ref<const Eigen::VectorXd>& x, double noise) {
    switch (kind_) {
        case SystemKind::wiener_poly: {
            const double u = 0.5 * x(0) - 0.3 * x(1);
            return u - 0.5 * u * u + 0.1 * u * u * u + noise;
        }
        case SystemKind::fluid_flow: {
            const double u = 0.1044 * x(0) + 0.0883 * x(1) + 1.4138 * y1_ - 0.6065 * y2_;
            const double y = 0.3163 * u / std::sqrt(0.10 + 0.90 * u * u) + noise;
            y2_ = y1_;
            y1_ = y;
            return y;
        }
        case SystemKind::kernel_expansion:
            return kernelize(x, *dict_, *kernel_).dot(coefficients_) + noise;
    }
    return 0.0;
}

void BenchmarkSystem::reset() noexcept {
    y1_ = 0.0;
    y2_ = 0.0;
}

SignalStream::SignalStream(Ar1Params input, BenchmarkSystem system, std::uint64_t seed)
    : source_(input, derive_seed(seed, 1)), system_(std::move(system)), noise_rng_(derive_seed(seed, 2)) {
    system_.reset();
    previous_ = source_.next();  // x(-1), stationary
}

double SignalStream::next(Eigen::Ref<Eigen::VectorXd> x) {
    if (x.size() != embedding_dimension) throw DimensionMismatch("signal stream emits 2-dimensional inputs");
    const double current = source_.next();
    x(0) = current;
    x(1) = previous_;
    previous_ = current;
    const double v = system_.noise_std() * normal_(noise_rng_);
    return system_.respond(x, v);
}

std::vector<Sample> generate(Ar1Params input, const BenchmarkSystem& system, std::uint64_t seed,
                             std::size_t n) {
    SignalStream stream(input, system, seed);
    std::vector<Sample> out(n);
    for (auto& s : out) {
        s.x.resize(embedding_dimension);
        s.y = stream.next(s.x);
    }
    return out;
}

std::vector<Eigen::VectorXd> input_stream(Ar1Params input, std::uint64_t seed, std::size_t n) {
    Ar1Source source(input, derive_seed(seed, 1));
    double previous = source.next();
    std::vector<Eigen::VectorXd> out(n, Eigen::VectorXd(embedding_dimension));
    for (auto& x : out) {
        const double current = source.next();
        x << current, previous;
        previous = current;
    }
    return out;
}

std::vector<double> smooth(std::span<const double> values, std::size_t window) {
    const std::size_t n = values.size();
    std::vector<double> out(n);
    if (n == 0) return out;
    window = std::max<std::size_t>(window, 1);
    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + values[i];
    const std::size_t half = window / 2;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i >= half ? i - half : 0;
        const std::size_t hi = std::min(n, lo + window);
        out[i] = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
    }
    return out;
}

double tail_mean(std::span<const double> values, double fraction) {
    if (values.empty()) throw InvalidArgument("tail mean of an empty sequence");
    const auto count = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(fraction * static_cast<double>(values.size()))), 1, values.size());
    double sum = 0.0;
    for (std::size_t i = values.size() - count; i < values.size(); ++i) sum += values[i];
    return sum / static_cast<double>(count);
}

double LearningCurve::steady_state() const {
    return tail_mean(smooth(mse_empirical, default_smoothing_window));
}

double LearningCurve::steady_state_stderr() const {
    const std::size_t r = run_tail_mse.size();
    if (r < 2) return std::numeric_limits<double>::quiet_NaN();
    double mean = 0.0;
    for (double v : run_tail_mse) mean += v;
    mean /= static_cast<double>(r);
    double var = 0.0;
    for (double v : run_tail_mse) var += (v - mean) * (v - mean);
    var /= static_cast<double>(r - 1);
    return std::sqrt(var / static_cast<double>(r));
}

namespace {

FilterState fresh_filter(const ExperimentConfig& config) {
    if (config.initial_weights)
        return FilterState(config.dict, config.kernel, config.step_size, *config.initial_weights);
    return FilterState(config.dict, config.kernel, config.step_size);
}

std::uint64_t run_seed(const ExperimentConfig& config, std::size_t run) {
    return derive_seed(config.seed, streams::run_base + run);
}

void check_config(const ExperimentConfig& config, std::size_t runs) {
    if (runs < 1) throw InvalidArgument("Monte Carlo needs at least one run");
    if (config.horizon < 1) throw InvalidArgument("horizon must be >= 1");
    if (config.dict.dimension() != embedding_dimension)
        throw DimensionMismatch("experiment dictionaries must be 2-dimensional");
}

constexpr std::size_t run_block = 32;

}  // namespace

LearningCurve monte_carlo(const ExperimentConfig& config, std::size_t runs) {
    check_config(config, runs);
    const std::size_t h = config.horizon;
    std::vector<std::vector<double>> squared(runs);

    detail::parallel_for(runs, [&](std::size_t r) {
        SignalStream stream(config.input, config.system, run_seed(config, r));
        FilterState filter = fresh_filter(config);
        Eigen::VectorXd x(embedding_dimension);
        auto& sq = squared[r];
        sq.resize(h);
        for (std::size_t n = 0; n < h; ++n) {
            const double y = stream.next(x);
            const double e = filter.update(x, y);
            if (filter.diverged())
                throw Diverged("filter diverged in run " + std::to_string(r) + " at iteration " + std::to_string(n),
                               n, r);
            sq[n] = e * e;
        }
    });

    LearningCurve curve;
    curve.runs = runs;
    curve.horizon = h;
    curve.mse_empirical.assign(h, 0.0);
    curve.mse_variance.assign(h, 0.0);
    for (std::size_t r = 0; r < runs; ++r)
        for (std::size_t n = 0; n < h; ++n) curve.mse_empirical[n] += squared[r][n];
    for (auto& v : curve.mse_empirical) v /= static_cast<double>(runs);
    if (runs > 1) {
        for (std::size_t r = 0; r < runs; ++r)
            for (std::size_t n = 0; n < h; ++n) {
                const double d = squared[r][n] - curve.mse_empirical[n];
                curve.mse_variance[n] += d * d;
            }
        for (auto& v : curve.mse_variance) v /= static_cast<double>(runs - 1);
    }
    curve.run_tail_mse.reserve(runs);
    for (const auto& sq : squared) curve.run_tail_mse.push_back(tail_mean(sq));
    return curve;
}

MeanWeightTrajectory mean_weight_trajectory(const ExperimentConfig& config, std::size_t runs) {
    check_config(config, runs);
    const std::size_t h = config.horizon;
    const auto M = static_cast<Eigen::Index>(config.dict.size());
    std::vector<Eigen::VectorXd> sum(h + 1, Eigen::VectorXd::Zero(M));
    std::vector<Eigen::VectorXd> sumsq(h + 1, Eigen::VectorXd::Zero(M));
    MeanWeightTrajectory out;

    // Blocks of runs in parallel, reduced in run order.
    for (std::size_t first = 0; first < runs; first += run_block) {
        const std::size_t count = std::min(run_block, runs - first);
        std::vector<Eigen::MatrixXd> traj(count);
        std::vector<char> diverged(count, 0);
        detail::parallel_for(count, [&](std::size_t k) {
            SignalStream stream(config.input, config.system, run_seed(config, first + k));
            FilterState filter = fresh_filter(config);
            Eigen::VectorXd x(embedding_dimension);
            auto& t = traj[k];
            t.resize(M, static_cast<Eigen::Index>(h + 1));
            t.col(0) = filter.weights();
            for (std::size_t n = 0; n < h; ++n) {
                if (!filter.diverged()) {
                    const double y = stream.next(x);
                    filter.update(x, y);
                }
                t.col(static_cast<Eigen::Index>(n + 1)) = filter.weights();
            }
            diverged[k] = filter.diverged();
        });
        for (std::size_t k = 0; k < count; ++k) {
            out.diverged_runs += diverged[k] ? 1 : 0;
            for (std::size_t n = 0; n <= h; ++n) {
                const auto col = traj[k].col(static_cast<Eigen::Index>(n));
                sum[n] += col;
                sumsq[n] += col.cwiseAbs2();
            }
        }
    }
    const double R = static_cast<double>(runs);
    out.mean.resize(h + 1);
    out.standard_error.resize(h + 1);
    for (std::size_t n = 0; n <= h; ++n) {
        out.mean[n] = sum[n] / R;
        if (runs > 1) {
            Eigen::VectorXd var = ((sumsq[n] - R * out.mean[n].cwiseAbs2()) / (R - 1.0)).cwiseMax(0.0);
            out.standard_error[n] = (var / R).cwiseSqrt();
        } else {
            out.standard_error[n] = Eigen::VectorXd::Constant(M, std::numeric_limits<double>::quiet_NaN());
        }
    }
    return out;
}

ExperimentTheory build_theory(const ExperimentConfig& config, TheoryOptions options) {
    InputModel input = InputModel::ar1_embedding(config.input, embedding_dimension);
    SignalStream stream(config.input, config.system, derive_seed(config.seed, streams::theory));
    Eigen::VectorXd scratch(embedding_dimension);
    for (std::size_t n = 0; n < options.warmup; ++n) stream.next(scratch);
    SampleSource source = [&stream](Eigen::Ref<Eigen::VectorXd> x) { return stream.next(x); };

    EstimateOptions est;
    est.seed = config.seed;
    OptimalSolution optimal = estimate_optimal(config.dict, config.kernel, input, source, options.samples, est);

    const Eigen::VectorXd alpha0 = config.initial_weights
                                       ? *config.initial_weights
                                       : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(config.dict.size()));
    const Eigen::VectorXd v0 = alpha0 - optimal.optimal_weights;
    Eigen::MatrixXd C0 = v0 * v0.transpose();

    TheoryModel model =
        TheoryModel::build(config.dict, config.kernel, input, config.step_size, std::move(optimal), options.model);
    return ExperimentTheory{std::move(input), std::move(model), std::move(C0)};
}

namespace {

double relative_deviation(double empirical, double theory) {
    const double diff = std::abs(theory - empirical);
    if (diff == 0.0) return 0.0;
    if (empirical == 0.0) return std::numeric_limits<double>::infinity();
    return diff / std::abs(empirical);
}

}  // namespace

ComparisonReport compare(const LearningCurve& curve, const PredictedCurve& predicted,
                         const CompareOptions& options) {
    if (curve.horizon != predicted.horizon || curve.mse_empirical.size() != predicted.mse.size())
        throw HorizonMismatch("empirical horizon " + std::to_string(curve.mse_empirical.size()) +
                              " differs from theory horizon " + std::to_string(predicted.mse.size()));
    if (curve.mse_empirical.empty()) throw HorizonMismatch("cannot compare empty curves");

    const auto emp = smooth(curve.mse_empirical, options.window);
    const auto th = smooth(predicted.mse, options.window);

    ComparisonReport report;
    report.steady_state_empirical = tail_mean(emp);
    report.steady_state_theory =
        std::isnan(predicted.steady_state_mse) ? tail_mean(th) : predicted.steady_state_mse;
    report.steady_state_relative_error =
        relative_deviation(report.steady_state_empirical, report.steady_state_theory);
    report.steady_state_pass = report.steady_state_relative_error <= options.steady_state_tolerance;

    report.transient_pass = true;
    for (std::size_t n : options.checkpoints) {
        if (n >= emp.size()) continue;
        CheckpointDeviation c{n, emp[n], th[n], relative_deviation(emp[n], th[n])};
        report.transient_max_deviation = std::max(report.transient_max_deviation, c.relative_deviation);
        report.transient_pass = report.transient_pass && c.relative_deviation <= options.transient_tolerance;
        report.checkpoints.push_back(c);
    }
    report.pass = report.steady_state_pass && report.transient_pass;
    return report;
}

void write_learning_curve(std::ostream& os, const LearningCurve& curve) {
    os << "n,mse_empirical,mse_theory\n" << std::setprecision(17);
    for (std::size_t n = 0; n < curve.mse_empirical.size(); ++n) {
        os << n << ',' << curve.mse_empirical[n] << ',';
        if (curve.mse_theory && n < curve.mse_theory->size()) os << (*curve.mse_theory)[n];
        os << '\n';
    }
}

LearningCurve read_learning_curve(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("n,mse_empirical", 0) != 0)
        throw IoError("learning curve CSV must start with header 'n,mse_empirical,mse_theory'");
    LearningCurve curve;
    std::vector<double> theory;
    bool has_theory = true;
    std::size_t row = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string n, emp, th;
        if (!std::getline(fields, n, ',') || !std::getline(fields, emp, ','))
            throw IoError("malformed learning curve row " + std::to_string(row));
        std::getline(fields, th, ',');
        try {
            if (std::stoull(n) != row) throw IoError("learning curve rows must be consecutive from n = 0");
            curve.mse_empirical.push_back(std::stod(emp));
            if (th.empty()) {
                has_theory = false;
            } else {
                theory.push_back(std::stod(th));
            }
        } catch (const std::logic_error&) {
            throw IoError("malformed number in learning curve row " + std::to_string(row));
        }
        ++row;
    }
    curve.horizon = curve.mse_empirical.size();
    if (has_theory && !theory.empty()) curve.mse_theory = std::move(theory);
    return curve;
}

void write_comparison_report(std::ostream& os, const ComparisonReport& report, const CompareOptions& options) {
    os << std::setprecision(10);
    os << "steady_state_empirical = " << report.steady_state_empirical << '\n';
    os << "steady_state_theory = " << report.steady_state_theory << '\n';
    os << "steady_state_relative_error = " << report.steady_state_relative_error << '\n';
    os << "steady_state_tolerance = " << options.steady_state_tolerance << '\n';
    for (const auto& c : report.checkpoints) {
        os << "checkpoint_" << c.n << "_empirical = " << c.empirical << '\n';
        os << "checkpoint_" << c.n << "_theory = " << c.theory << '\n';
        os << "checkpoint_" << c.n << "_relative_deviation = " << c.relative_deviation << '\n';
    }
    os << "transient_max_deviation = " << report.transient_max_deviation << '\n';
    os << "transient_tolerance = " << options.transient_tolerance << '\n';
    os << "smoothing_window = " << options.window << '\n';
    os << "steady_state_pass = " << (report.steady_state_pass ? "true" : "false") << '\n';
    os << "transient_pass = " << (report.transient_pass ? "true" : "false") << '\n';
    os << "pass = " << (report.pass ? "true" : "false") << '\n';
}

ExperimentSetup experiment1(std::uint64_t seed) {
    return ExperimentSetup{
        ExperimentConfig{
            .input = {0.5, 0.5},
            .system = BenchmarkSystem::wiener_poly(0.05),
            .dict = from_grid({-1.0, -1.0}, {1.0, 1.0}, {5, 5}),
            .kernel = GaussianKernel(0.25),
            .step_size = 0.05,
            .horizon = 5000,
            .seed = seed,
            .initial_weights = std::nullopt,
        },
        std::nullopt};
}

ExperimentSetup experiment2(std::uint64_t seed) {
    const Ar1Params input{0.5, 0.25};
    const GaussianKernel kernel(0.15);
    const auto stream = input_stream(input, derive_seed(seed, streams::dictionary), coherence_stream_length);
    const CoherenceSweep sweep = coherence_threshold_for_size(stream, kernel, 37);
    return ExperimentSetup{
        ExperimentConfig{
            .input = input,
            .system = BenchmarkSystem::fluid_flow(0.05),
            .dict = from_coherence(stream, kernel, sweep.mu0),
            .kernel = kernel,
            .step_size = 0.05,
            .horizon = 5000,
            .seed = seed,
            .initial_weights = std::nullopt,
        },
        sweep};
}

}  // namespace klms
