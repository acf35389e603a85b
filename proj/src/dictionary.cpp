#include "klms/dictionary.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "klms/errors.hpp"

namespace klms {

Dictionary::Dictionary(Eigen::MatrixXd centers) : centers_(std::move(centers)) {
    if (centers_.cols() < 1 || centers_.rows() < 1)
        throw InvalidArgument("dictionary needs at least one center of dimension >= 1");
    if (!centers_.allFinite()) throw InvalidArgument("dictionary has non-finite coordinates");
    for (Eigen::Index i = 0; i < centers_.cols(); ++i)
        for (Eigen::Index j = i + 1; j < centers_.cols(); ++j)
            if ((centers_.col(i) - centers_.col(j)).squaredNorm() == 0.0)
                throw InvalidArgument("dictionary centers " + std::to_string(i) + " and " +
                                      std::to_string(j) + " are identical");
}

bool Dictionary::operator==(const Dictionary& other) const {
    return centers_.rows() == other.centers_.rows() && centers_.cols() == other.centers_.cols() &&
           centers_ == other.centers_;
}

Dictionary from_grid(const std::vector<double>& lower, const std::vector<double>& upper,
                     const std::vector<int>& points_per_axis) {
    const std::size_t L = lower.size();
    if (L == 0 || upper.size() != L || points_per_axis.size() != L)
        throw DimensionMismatch("grid bounds and point counts must share one non-zero dimension");

    Eigen::Index total = 1;
    for (std::size_t a = 0; a < L; ++a) {
        if (points_per_axis[a] < 1) throw InvalidArgument("grid needs at least one point per axis");
        if (!(lower[a] <= upper[a])) throw InvalidArgument("grid lower bound exceeds upper bound");
        if (lower[a] == upper[a] && points_per_axis[a] > 1)
            throw InvalidArgument("degenerate grid axis with more than one point");
        total *= points_per_axis[a];
    }

    Eigen::MatrixXd centers(static_cast<Eigen::Index>(L), total);
    std::vector<int> counter(L, 0);
    for (Eigen::Index k = 0; k < total; ++k) {
        for (std::size_t a = 0; a < L; ++a) {
            const int n = points_per_axis[a];
            centers(static_cast<Eigen::Index>(a), k) =
                n == 1 ? lower[a] : lower[a] + (upper[a] - lower[a]) * counter[a] / (n - 1);
        }
        // Last axis varies fastest.
        for (std::size_t a = L; a-- > 0;) {
            if (++counter[a] < points_per_axis[a]) break;
            counter[a] = 0;
        }
    }
    return Dictionary(std::move(centers));
}

Dictionary from_coherence(std::span<const Eigen::VectorXd> stream, const GaussianKernel& kernel,
                          double mu0) {
    if (stream.empty()) throw InvalidArgument("coherence criterion needs a non-empty stream");
    if (!(mu0 >= 0.0 && mu0 < 1.0)) throw InvalidArgument("coherence threshold must lie in [0, 1)");

    const Eigen::Index L = stream.front().size();
    std::vector<Eigen::Index> admitted{0};
    for (std::size_t n = 1; n < stream.size(); ++n) {
        if (stream[n].size() != L) throw DimensionMismatch("stream vectors differ in dimension");
        double coherence = 0.0;
        for (auto k : admitted) {
            coherence = std::max(coherence, kernel(stream[n], stream[static_cast<std::size_t>(k)]));
            if (coherence > mu0) break;
        }
        if (coherence <= mu0) admitted.push_back(static_cast<Eigen::Index>(n));
    }

    Eigen::MatrixXd centers(L, static_cast<Eigen::Index>(admitted.size()));
    for (std::size_t k = 0; k < admitted.size(); ++k)
        centers.col(static_cast<Eigen::Index>(k)) = stream[static_cast<std::size_t>(admitted[k])];
    return Dictionary(std::move(centers));
}

CoherenceSweep coherence_threshold_for_size(std::span<const Eigen::VectorXd> stream,
                                            const GaussianKernel& kernel, std::size_t target) {
    if (target < 1) throw InvalidArgument("target dictionary size must be >= 1");
    auto size_at = [&](double mu) { return from_coherence(stream, kernel, mu).size(); };

    double lo = 0.0;
    std::size_t size_lo = size_at(lo);
    if (size_lo >= target) return {lo, size_lo, size_lo == target};
    double hi = std::nextafter(1.0, 0.0);
    std::size_t size_hi = size_at(hi);
    if (size_hi < target) return {hi, size_hi, false};

    // Invariant: size(lo) < target <= size(hi).
    for (int it = 0; it < 100 && hi - lo > 1e-15; ++it) {
        const double mid = 0.5 * (lo + hi);
        const std::size_t s = size_at(mid);
        if (s < target) {
            lo = mid;
        } else {
            hi = mid;
            size_hi = s;
        }
    }
    return {hi, size_hi, size_hi == target};
}

DictionaryDiagnostics diagnose(const Eigen::MatrixXd& centers, const GaussianKernel& kernel) {
    DictionaryDiagnostics d;
    const Eigen::Index M = centers.cols();
    d.size = static_cast<std::size_t>(M);
    if (M <= 1) return d;

    Eigen::MatrixXd gram(M, M);
    d.min_distance = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < M; ++i) {
        gram(i, i) = 1.0;
        for (Eigen::Index j = i + 1; j < M; ++j) {
            const double d2 = (centers.col(i) - centers.col(j)).squaredNorm();
            const double k = kernel.from_squared_distance(d2);
            gram(i, j) = gram(j, i) = k;
            d.min_distance = std::min(d.min_distance, std::sqrt(d2));
            d.max_coherence = std::max(d.max_coherence, k);
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    d.gram_condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    d.near_duplicates = d.max_coherence > near_duplicate_coherence;
    return d;
}

DictionaryDiagnostics diagnose(const Dictionary& dict, const GaussianKernel& kernel) {
    return diagnose(dict.centers(), kernel);
}

void write_dictionary(std::ostream& os, const Dictionary& dict) {
    const auto& C = dict.centers();
    os << C.cols() << ' ' << C.rows() << '\n' << std::setprecision(17);
    for (Eigen::Index k = 0; k < C.cols(); ++k) {
        for (Eigen::Index a = 0; a < C.rows(); ++a) os << (a ? " " : "") << C(a, k);
        os << '\n';
    }
}

void write_dictionary(const std::string& path, const Dictionary& dict) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path + " for writing");
    write_dictionary(os, dict);
    if (!os) throw IoError("failed writing " + path);
}

Eigen::MatrixXd read_centers(std::istream& is) {
    long M = 0;
    long L = 0;
    if (!(is >> M >> L) || M < 1 || L < 1) throw IoError("dictionary header must be 'M L' with M, L >= 1");
    Eigen::MatrixXd C(L, M);
    for (long k = 0; k < M; ++k)
        for (long a = 0; a < L; ++a)
            if (!(is >> C(a, k)))
                throw IoError("dictionary file truncated at center " + std::to_string(k));
    std::string rest;
    if (is >> rest) throw IoError("trailing data after " + std::to_string(M) + " centers");
    return C;
}

Dictionary read_dictionary(std::istream& is) { return Dictionary(read_centers(is)); }

Dictionary read_dictionary(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open dictionary file " + path);
    return read_dictionary(is);
}

}  // namespace klms
