#include "klms/theory.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "klms/errors.hpp"
#include "klms/filter.hpp"
#include "klms/random.hpp"
#include "parallel.hpp"

namespace klms {

namespace {

Eigen::VectorXd vec(const Eigen::MatrixXd& C) {
    return Eigen::Map<const Eigen::VectorXd>(C.data(), C.size());
}

Eigen::MatrixXd unvec(const Eigen::VectorXd& c, Eigen::Index M) {
    return Eigen::Map<const Eigen::MatrixXd>(c.data(), M, M);
}

void symmetrize_if_needed(Eigen::MatrixXd& C) {
    if ((C - C.transpose()).cwiseAbs().maxCoeff() > 1e-12) C = 0.5 * (C + C.transpose()).eval();
}

double trace_product(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
    // trace{A B} = sum_ij A_ij B_ji
    return A.cwiseProduct(B.transpose()).sum();
}

void check_square(const Eigen::MatrixXd& A, Eigen::Index n, const char* what) {
    if (A.rows() != n || A.cols() != n)
        throw DimensionMismatch(std::string(what) + " must be " + std::to_string(n) + "x" + std::to_string(n));
}

}  // namespace

OptimalSolution solve_optimal(const Eigen::MatrixXd& rkk, const Eigen::VectorXd& cross_correlation,
                              double output_power) {
    const Eigen::Index M = rkk.rows();
    check_square(rkk, M, "R");
    if (cross_correlation.size() != M) throw DimensionMismatch("cross-correlation length differs from M");

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(rkk, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || hi / lo > EstimateOptions::max_condition)
        throw IllConditioned("R condition number " + std::to_string(lo > 0.0 ? hi / lo : INFINITY) +
                             " exceeds 1e12; check the dictionary for near-duplicate centers");

    Eigen::LDLT<Eigen::MatrixXd> ldlt(rkk);
    Eigen::VectorXd alpha = ldlt.solve(cross_correlation);
    const double pnorm = cross_correlation.norm();
    Eigen::VectorXd residual = cross_correlation - rkk * alpha;
    if (residual.norm() > 1e-8 * pnorm) {
        alpha += ldlt.solve(residual);
        residual = cross_correlation - rkk * alpha;
    }
    if (residual.norm() > 1e-8 * pnorm)
        throw IllConditioned("optimal weight residual " + std::to_string(residual.norm()) + " too large");

    OptimalSolution s;
    s.cross_correlation = cross_correlation;
    s.optimal_weights = std::move(alpha);
    s.output_power = output_power;
    // Sampling noise in p can push the estimate slightly below zero.
    s.min_mse = std::max(0.0, output_power - cross_correlation.dot(s.optimal_weights));
    return s;
}

OptimalSolution estimate_optimal(const Dictionary& dict, const GaussianKernel& kernel,
                                 const InputModel& input, const SampleSource& source,
                                 std::size_t n_samples, EstimateOptions options) {
    if (n_samples < 2) throw InvalidArgument("estimate_optimal needs at least two samples");
    const std::size_t batches = std::clamp<std::size_t>(options.batches, 1, n_samples);
    const Eigen::MatrixXd rkk = rkk_matrix(dict, kernel, input);
    const auto M = static_cast<Eigen::Index>(dict.size());

    Eigen::MatrixXd batch_p = Eigen::MatrixXd::Zero(M, static_cast<Eigen::Index>(batches));
    Eigen::VectorXd batch_y2 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(batches));
    std::vector<double> batch_count(batches, 0.0);

    Eigen::VectorXd x(input.dimension());
    Eigen::VectorXd k(M);
    const std::size_t per_batch = n_samples / batches;
    for (std::size_t n = 0; n < n_samples; ++n) {
        const std::size_t b = std::min(n / per_batch, batches - 1);
        const double y = source(x);
        kernelize_into(x, dict, kernel, k);
        batch_p.col(static_cast<Eigen::Index>(b)) += y * k;
        batch_y2(static_cast<Eigen::Index>(b)) += y * y;
        batch_count[b] += 1.0;
    }

    const double total = static_cast<double>(n_samples);
    OptimalSolution solution =
        solve_optimal(rkk, batch_p.rowwise().sum() / total, batch_y2.sum() / total);
    solution.samples = n_samples;

    if (options.resamples > 1 && batches > 1) {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(rkk);
        Rng rng(derive_seed(options.seed, streams::bootstrap));
        std::uniform_int_distribution<std::size_t> pick(0, batches - 1);
        std::vector<double> jmins(options.resamples);
        for (auto& j : jmins) {
            Eigen::VectorXd p = Eigen::VectorXd::Zero(M);
            double y2 = 0.0;
            double count = 0.0;
            for (std::size_t b = 0; b < batches; ++b) {
                const std::size_t s = pick(rng);
                p += batch_p.col(static_cast<Eigen::Index>(s));
                y2 += batch_y2(static_cast<Eigen::Index>(s));
                count += batch_count[s];
            }
            p /= count;
            j = y2 / count - p.dot(ldlt.solve(p));
        }
        double mean = 0.0;
        for (double j : jmins) mean += j;
        mean /= static_cast<double>(jmins.size());
        double var = 0.0;
        for (double j : jmins) var += (j - mean) * (j - mean);
        solution.min_mse_stderr = std::sqrt(var / static_cast<double>(jmins.size() - 1));
    }
    return solution;
}

double mean_stability_bound(const Eigen::MatrixXd& rkk) {
    check_square(rkk, rkk.rows(), "R");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(rkk, Eigen::EigenvaluesOnly);
    const double lmax = eig.eigenvalues().maxCoeff();
    if (!(lmax > 0.0)) throw InvalidArgument("R has no positive eigenvalue");
    return 2.0 / lmax;
}

double mean_iteration_radius(const Eigen::MatrixXd& rkk, double eta) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(rkk, Eigen::EigenvaluesOnly);
    return (1.0 - eta * eig.eigenvalues().array()).abs().maxCoeff();
}

Eigen::MatrixXd kron_identity_left(const Eigen::MatrixXd& rkk) {
    const Eigen::Index M = rkk.rows();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(M * M, M * M);
    for (Eigen::Index j = 0; j < M; ++j) out.block(j * M, j * M, M, M) = rkk;
    return out;
}

Eigen::MatrixXd kron_identity_right(const Eigen::MatrixXd& rkk) {
    const Eigen::Index M = rkk.rows();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(M * M, M * M);
    for (Eigen::Index j = 0; j < M; ++j)
        for (Eigen::Index p = 0; p < M; ++p)
            out.block(j * M, p * M, M, M).diagonal().setConstant(rkk(j, p));
    return out;
}

Eigen::MatrixXd build_G(const Eigen::MatrixXd& rkk, const Eigen::MatrixXd& g3, double eta) {
    const Eigen::Index M = rkk.rows();
    check_square(rkk, M, "R");
    check_square(g3, M * M, "G3");
    Eigen::MatrixXd G = (eta * eta) * g3;
    for (Eigen::Index j = 0; j < M; ++j) {
        for (Eigen::Index p = 0; p < M; ++p) {
            auto block = G.block(j * M, p * M, M, M);
            block.diagonal().array() -= eta * rkk(j, p);  // R (x) I
            if (j == p) {
                block -= eta * rkk;  // I (x) R
                block.diagonal().array() += 1.0;
            }
        }
    }
    return G;
}

double symmetric_spectral_radius(const Eigen::MatrixXd& symmetric) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(symmetric, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().cwiseAbs().maxCoeff();
}

TheoryModel::TheoryModel(Eigen::MatrixXd rkk, Eigen::MatrixXd g3, double step_size, OptimalSolution optimal)
    : step_size_(step_size), rkk_(std::move(rkk)), optimal_(std::move(optimal)) {
    const Eigen::Index M = rkk_.rows();
    check_square(rkk_, M, "R");
    check_square(g3, M * M, "G3");
    if (optimal_.optimal_weights.size() != M) throw DimensionMismatch("optimal weights length differs from M");
    if (!(step_size_ >= 0.0)) throw InvalidArgument("step size must be non-negative");
    lambda_max_ = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(rkk_, Eigen::EigenvaluesOnly)
                      .eigenvalues()
                      .maxCoeff();
    G_ = build_G(rkk_, g3, step_size_);
    g3_ = std::move(g3);
    spectral_radius_ = symmetric_spectral_radius(*G_);
}

TheoryModel TheoryModel::build(const Dictionary& dict, const GaussianKernel& kernel,
                               const InputModel& input, double step_size, OptimalSolution optimal,
                               ModelOptions options) {
    if (dict.size() <= options.max_dense_size)
        return TheoryModel(rkk_matrix(dict, kernel, input), k4_arrangement(dict, kernel, input),
                           step_size, std::move(optimal));

    TheoryModel model;
    model.step_size_ = step_size;
    model.rkk_ = rkk_matrix(dict, kernel, input);
    model.optimal_ = std::move(optimal);
    model.moments_ = std::make_shared<const KernelMoments>(dict, kernel, input);
    model.lambda_max_ = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(model.rkk_, Eigen::EigenvaluesOnly)
                            .eigenvalues()
                            .maxCoeff();

    // Lanczos with full reorthogonalization; the extreme Ritz values bound
    // the spectrum from inside and the residual bounds their error.
    const Eigen::Index M = model.rkk_.rows();
    const Eigen::Index n = M * M;
    const Eigen::Index steps = std::min<Eigen::Index>(n, static_cast<Eigen::Index>(options.lanczos_steps));
    Eigen::MatrixXd Q(n, steps);
    Eigen::VectorXd alpha(steps), beta(steps);
    Eigen::VectorXd q = vec(model.rkk_) + Eigen::VectorXd::Constant(n, 1.0 / double(M));
    q.normalize();
    double radius = 0.0;
    for (Eigen::Index k = 0; k < steps; ++k) {
        Q.col(k) = q;
        Eigen::VectorXd w = model.apply_G(q);
        alpha(k) = q.dot(w);
        for (int pass = 0; pass < 2; ++pass) w -= Q.leftCols(k + 1) * (Q.leftCols(k + 1).transpose() * w);
        beta(k) = w.norm();

        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ritz;
        ritz.computeFromTridiagonal(alpha.head(k + 1), beta.head(k), Eigen::ComputeEigenvectors);
        Eigen::Index idx = 0;
        ritz.eigenvalues().cwiseAbs().maxCoeff(&idx);
        radius = std::abs(ritz.eigenvalues()(idx));
        const double residual = beta(k) * std::abs(ritz.eigenvectors()(k, idx));
        if (residual <= 1e-13 * radius || beta(k) <= 1e-14 * radius) break;
        q = w / beta(k);
    }
    model.spectral_radius_ = radius;
    return model;
}

const Eigen::MatrixXd& TheoryModel::G() const {
    if (!G_) throw InvalidArgument("G is not stored for a matrix-free model");
    return *G_;
}

const Eigen::MatrixXd& TheoryModel::G3() const {
    if (!g3_) throw InvalidArgument("G3 is not stored for a matrix-free model");
    return *g3_;
}

Eigen::MatrixXd TheoryModel::fourth_moment_term(const Eigen::MatrixXd& C) const {
    const Eigen::Index M = rkk_.rows();
    check_square(C, M, "C");
    if (g3_) return unvec(*g3_ * vec(C), M);

    Eigen::MatrixXd T(M, M);
    const auto n = static_cast<std::size_t>(M);
    detail::parallel_for(n, [&](std::size_t i) {
        for (std::size_t j = i; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < n; ++p)
                for (std::size_t l = 0; l < n; ++l)
                    acc += moments_->k4(i, j, l, p) * C(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(p));
            T(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = acc;
        }
    });
    for (Eigen::Index i = 0; i < M; ++i)
        for (Eigen::Index j = 0; j < i; ++j) T(i, j) = T(j, i);
    return T;
}

Eigen::VectorXd TheoryModel::apply_G(const Eigen::VectorXd& c) const {
    const Eigen::Index M = rkk_.rows();
    if (c.size() != M * M) throw DimensionMismatch("vectorized covariance must have M^2 entries");
    if (G_) return *G_ * c;
    const Eigen::MatrixXd C = unvec(c, M);
    const double eta = step_size_;
    const Eigen::MatrixXd next = C - eta * (rkk_ * C + C * rkk_) + (eta * eta) * fourth_moment_term(C);
    return vec(next);
}

std::vector<Eigen::VectorXd> mean_weight_recursion(const TheoryModel& model, const Eigen::VectorXd& v0,
                                                   std::size_t horizon) {
    if (v0.size() != model.rkk().rows()) throw DimensionMismatch("v0 length differs from M");
    std::vector<Eigen::VectorXd> out;
    out.reserve(horizon + 1);
    out.push_back(v0);
    for (std::size_t n = 0; n < horizon; ++n) {
        const auto& v = out.back();
        out.push_back(v - model.step_size() * (model.rkk() * v));
    }
    return out;
}

MsStability ms_stability(const TheoryModel& model) {
    return {model.spectral_radius() < 1.0, model.spectral_radius()};
}

Eigen::MatrixXd covariance_step(const TheoryModel& model, const Eigen::MatrixXd& C, double min_mse) {
    const Eigen::Index M = model.rkk().rows();
    check_square(C, M, "C");
    const double eta = model.step_size();
    Eigen::MatrixXd next = unvec(model.apply_G(vec(C)), M) + (eta * eta * min_mse) * model.rkk();
    symmetrize_if_needed(next);
    return next;
}

void iterate_covariance(const TheoryModel& model, const Eigen::MatrixXd& C0, double min_mse,
                        std::size_t horizon,
                        const std::function<void(std::size_t, const Eigen::MatrixXd&)>& visit) {
    check_square(C0, model.rkk().rows(), "C0");
    Eigen::MatrixXd C = C0;
    symmetrize_if_needed(C);
    visit(0, C);
    for (std::size_t n = 1; n <= horizon; ++n) {
        C = covariance_step(model, C, min_mse);
        const double tr = C.trace();
        if (!std::isfinite(tr) || !C.allFinite() || std::abs(tr) > divergence_trace ||
            C.cwiseAbs().maxCoeff() > divergence_trace)
            throw Diverged("covariance recursion diverged at step " + std::to_string(n) +
                               " (spectral radius of G = " + std::to_string(model.spectral_radius()) + ")",
                           n);
        visit(n, C);
    }
}

std::vector<Eigen::MatrixXd> covariance_recursion(const TheoryModel& model, const Eigen::MatrixXd& C0,
                                                  double min_mse, std::size_t horizon) {
    std::vector<Eigen::MatrixXd> out;
    out.reserve(horizon + 1);
    iterate_covariance(model, C0, min_mse, horizon,
                       [&](std::size_t, const Eigen::MatrixXd& C) { out.push_back(C); });
    return out;
}

SteadyState steady_state(const TheoryModel& model, double min_mse) {
    if (!ms_stability(model).stable)
        throw Unstable("G has spectral radius " + std::to_string(model.spectral_radius()) +
                           " >= 1; no steady state",
                       model.spectral_radius());
    const Eigen::Index M = model.rkk().rows();
    const double eta = model.step_size();
    const Eigen::VectorXd rhs = (eta * eta * min_mse) * vec(model.rkk());

    Eigen::VectorXd c;
    if (model.dense()) {
        Eigen::MatrixXd A = -model.G();
        A.diagonal().array() += 1.0;
        c = Eigen::LDLT<Eigen::MatrixXd>(A).solve(rhs);
    } else {
        // Conjugate gradients on the SPD operator I - G.
        c = Eigen::VectorXd::Zero(M * M);
        Eigen::VectorXd r = rhs;
        Eigen::VectorXd p = r;
        double rr = r.squaredNorm();
        const double stop = 1e-28 * std::max(rhs.squaredNorm(), 1e-300);
        for (Eigen::Index it = 0; it < 20 * M * M && rr > stop; ++it) {
            const Eigen::VectorXd Ap = p - model.apply_G(p);
            const double a = rr / p.dot(Ap);
            c += a * p;
            r -= a * Ap;
            const double rr_next = r.squaredNorm();
            p = r + (rr_next / rr) * p;
            rr = rr_next;
        }
    }
    SteadyState s;
    s.covariance = unvec(c, M);
    s.covariance = 0.5 * (s.covariance + s.covariance.transpose()).eval();
    s.mse = min_mse + trace_product(model.rkk(), s.covariance);
    return s;
}

PredictedCurve predict_curve(const TheoryModel& model, const Eigen::MatrixXd& C0, std::size_t horizon) {
    PredictedCurve curve;
    curve.horizon = horizon;
    const double jmin = model.optimal().min_mse;
    if (horizon > 0) {
        curve.mse.reserve(horizon);
        curve.emse.reserve(horizon);
        iterate_covariance(model, C0, jmin, horizon - 1, [&](std::size_t, const Eigen::MatrixXd& C) {
            const double emse = trace_product(model.rkk(), C);
            curve.emse.push_back(emse);
            curve.mse.push_back(jmin + emse);
        });
    }
    if (ms_stability(model).stable) curve.steady_state_mse = steady_state(model, jmin).mse;
    return curve;
}

void write_predicted_curve(std::ostream& os, const PredictedCurve& curve) {
    os << "n,mse_theory,emse_theory\n" << std::setprecision(17);
    for (std::size_t n = 0; n < curve.mse.size(); ++n)
        os << n << ',' << curve.mse[n] << ',' << curve.emse[n] << '\n';
}

PredictedCurve read_predicted_curve(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("n,mse_theory", 0) != 0)
        throw IoError("predicted curve CSV must start with header 'n,mse_theory,emse_theory'");
    PredictedCurve curve;
    std::size_t row = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string n, mse, emse;
        if (!std::getline(fields, n, ',') || !std::getline(fields, mse, ',') || !std::getline(fields, emse, ','))
            throw IoError("malformed predicted curve row " + std::to_string(row));
        try {
            if (std::stoull(n) != row) throw IoError("predicted curve rows must be consecutive from n = 0");
            curve.mse.push_back(std::stod(mse));
            curve.emse.push_back(std::stod(emse));
        } catch (const std::logic_error&) {
            throw IoError("malformed number in predicted curve row " + std::to_string(row));
        }
        ++row;
    }
    curve.horizon = curve.mse.size();
    return curve;
}

}  // namespace klms
