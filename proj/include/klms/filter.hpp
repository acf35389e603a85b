#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "klms/dictionary.hpp"
#include "klms/kernel.hpp"

namespace klms {

/// kappa(x) = [k(x, c_1), ..., k(x, c_M)]'
Eigen::VectorXd kernelize(const Eigen::Ref<const Eigen::VectorXd>& x, const Dictionary& dict,
                          const GaussianKernel& kernel);

/// In-place variant for hot loops; `out` must have dict.size() entries.
void kernelize_into(const Eigen::Ref<const Eigen::VectorXd>& x, const Dictionary& dict,
                    const GaussianKernel& kernel, Eigen::Ref<Eigen::VectorXd> out);

struct StepRecord {
    Eigen::VectorXd kernelized_input;
    double prediction = 0.0;
    double error = 0.0;
    double desired = 0.0;
};

struct Sample {
    Eigen::VectorXd x;
    double y = 0.0;
};

/// One KLMS filter instance over a fixed dictionary.
class FilterState {
public:
    /// Zero-initialized weights.
    FilterState(Dictionary dict, GaussianKernel kernel, double step_size);
    FilterState(Dictionary dict, GaussianKernel kernel, double step_size,
                Eigen::VectorXd initial_weights);

    const Eigen::VectorXd& weights() const noexcept { return weights_; }
    double step_size() const noexcept { return step_size_; }
    const Dictionary& dictionary() const noexcept { return dict_; }
    const GaussianKernel& kernel() const noexcept { return kernel_; }
    std::size_t iteration() const noexcept { return iteration_; }
    bool diverged() const noexcept { return diverged_; }

    /// Weight norm above which the filter is declared diverged.
    static constexpr double divergence_norm = 1e8;

    /// A-priori error e(n) = y - kappa' alpha(n), then
    /// alpha(n+1) = alpha(n) + eta e(n) kappa.
    ///
    /// If the update leaves a non-finite weight or a norm above
    /// divergence_norm, the weights keep their previous value and the state is
    /// flagged diverged. Stepping a diverged state throws NonFinite.
    StepRecord step(const Eigen::Ref<const Eigen::VectorXd>& x, double y);

    /// step() without materializing the record; returns e(n).
    double update(const Eigen::Ref<const Eigen::VectorXd>& x, double y);

private:
    Dictionary dict_;
    GaussianKernel kernel_;
    double step_size_;
    Eigen::VectorXd weights_;
    Eigen::VectorXd scratch_;
    double last_prediction_ = 0.0;
    std::size_t iteration_ = 0;
    bool diverged_ = false;
};

struct RunResult {
    std::vector<StepRecord> records;
    bool diverged = false;
    std::optional<std::size_t> failure_index;  ///< stream index of the failing step
};

/// Feeds the stream through the filter in order, stopping at divergence.
RunResult run(FilterState& state, std::span<const Sample> stream);

/// CSV with header "n,y,prediction,error".
void write_step_records(std::ostream& os, std::span<const StepRecord> records,
                        std::size_t first_index = 0);

}  // namespace klms
