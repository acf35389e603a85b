#include "klms/filter.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

#include "klms/errors.hpp"

namespace klms {

void kernelize_into(const Eigen::Ref<const Eigen::VectorXd>& x, const Dictionary& dict,
                    const GaussianKernel& kernel, Eigen::Ref<Eigen::VectorXd> out) {
    if (x.size() != dict.dimension())
        throw DimensionMismatch("input dimension " + std::to_string(x.size()) +
                                " differs from dictionary dimension " + std::to_string(dict.dimension()));
    const auto& C = dict.centers();
    for (Eigen::Index i = 0; i < C.cols(); ++i)
        out(i) = kernel.from_squared_distance((C.col(i) - x).squaredNorm());
}

Eigen::VectorXd kernelize(const Eigen::Ref<const Eigen::VectorXd>& x, const Dictionary& dict,
                          const GaussianKernel& kernel) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(dict.size()));
    kernelize_into(x, dict, kernel, out);
    return out;
}

FilterState::FilterState(Dictionary dict, GaussianKernel kernel, double step_size)
    : FilterState(dict, kernel, step_size, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dict.size()))) {}

FilterState::FilterState(Dictionary dict, GaussianKernel kernel, double step_size,
                         Eigen::VectorXd initial_weights)
    : dict_(std::move(dict)),
      kernel_(kernel),
      step_size_(step_size),
      weights_(std::move(initial_weights)),
      scratch_(static_cast<Eigen::Index>(dict_.size())) {
    if (!(step_size_ >= 0.0) || !std::isfinite(step_size_))
        throw InvalidArgument("step size must be finite and non-negative");
    if (weights_.size() != static_cast<Eigen::Index>(dict_.size()))
        throw DimensionMismatch("initial weights must have one entry per dictionary center");
}

double FilterState::update(const Eigen::Ref<const Eigen::VectorXd>& x, double y) {
    if (diverged_) throw NonFinite("filter diverged at iteration " + std::to_string(iteration_));
    kernelize_into(x, dict_, kernel_, scratch_);
    last_prediction_ = scratch_.dot(weights_);
    const double error = y - last_prediction_;
    const double gain = step_size_ * error;
    // Candidate update checked before committing so a diverged state keeps
    // its last finite weights.
    double norm2 = 0.0;
    bool finite = std::isfinite(gain);
    for (Eigen::Index i = 0; finite && i < weights_.size(); ++i) {
        const double w = weights_(i) + gain * scratch_(i);
        finite = std::isfinite(w);
        norm2 += w * w;
    }
    if (!finite || norm2 > divergence_norm * divergence_norm) {
        diverged_ = true;
    } else {
        weights_.noalias() += gain * scratch_;
    }
    ++iteration_;
    return error;
}

StepRecord FilterState::step(const Eigen::Ref<const Eigen::VectorXd>& x, double y) {
    const double error = update(x, y);
    StepRecord rec;
    rec.kernelized_input = scratch_;
    rec.desired = y;
    rec.error = error;
    rec.prediction = last_prediction_;
    return rec;
}

RunResult run(FilterState& state, std::span<const Sample> stream) {
    RunResult result;
    result.records.reserve(stream.size());
    for (std::size_t n = 0; n < stream.size(); ++n) {
        result.records.push_back(state.step(stream[n].x, stream[n].y));
        if (state.diverged()) {
            result.diverged = true;
            result.failure_index = n;
            break;
        }
    }
    return result;
}

void write_step_records(std::ostream& os, std::span<const StepRecord> records, std::size_t first_index) {
    os << "n,y,prediction,error\n" << std::setprecision(17);
    for (std::size_t k = 0; k < records.size(); ++k) {
        const auto& r = records[k];
        os << first_index + k << ',' << r.desired << ',' << r.prediction << ',' << r.error << '\n';
    }
}

}  // namespace klms
