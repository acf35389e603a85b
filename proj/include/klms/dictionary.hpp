#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "klms/kernel.hpp"

namespace klms {

/// Ordered, immutable set of M kernel centers in R^L, stored column-wise.
/// Construction rejects empty sets and identical centers.
class Dictionary {
public:
    explicit Dictionary(Eigen::MatrixXd centers);

    std::size_t size() const noexcept { return static_cast<std::size_t>(centers_.cols()); }
    int dimension() const noexcept { return static_cast<int>(centers_.rows()); }

    const Eigen::MatrixXd& centers() const noexcept { return centers_; }
    Eigen::MatrixXd::ConstColXpr center(std::size_t i) const { return centers_.col(static_cast<Eigen::Index>(i)); }

    bool operator==(const Dictionary& other) const;

private:
    Eigen::MatrixXd centers_;
};

/// Cartesian grid, lexicographic in the axis index with the first axis
/// varying slowest.
Dictionary from_grid(const std::vector<double>& lower, const std::vector<double>& upper,
                     const std::vector<int>& points_per_axis);

/// Coherence-criterion admission: a sample joins the dictionary when its
/// largest kernel value against the current centers is <= mu0. The first
/// sample is always admitted.
Dictionary from_coherence(std::span<const Eigen::VectorXd> stream, const GaussianKernel& kernel,
                          double mu0);

struct CoherenceSweep {
    double mu0 = 0.0;
    std::size_t size = 0;
    bool exact = false;  ///< size equals the requested target
};

/// Bisection on mu0 in [0, 1) for a dictionary of `target` centers.
CoherenceSweep coherence_threshold_for_size(std::span<const Eigen::VectorXd> stream,
                                            const GaussianKernel& kernel, std::size_t target);

struct DictionaryDiagnostics {
    std::size_t size = 0;
    double min_distance = 0.0;   ///< 0 when M = 1
    double max_coherence = 0.0;  ///< 0 when M = 1
    double gram_condition = 1.0;
    bool near_duplicates = false;  ///< max coherence above 0.999
};

inline constexpr double near_duplicate_coherence = 0.999;

DictionaryDiagnostics diagnose(const Eigen::MatrixXd& centers, const GaussianKernel& kernel);
DictionaryDiagnostics diagnose(const Dictionary& dict, const GaussianKernel& kernel);

/// Text format: a header line "M L" followed by M lines of L coordinates.
void write_dictionary(std::ostream& os, const Dictionary& dict);
void write_dictionary(const std::string& path, const Dictionary& dict);
/// Raw centers as stored in a file, without validation.
Eigen::MatrixXd read_centers(std::istream& is);
Dictionary read_dictionary(std::istream& is);
Dictionary read_dictionary(const std::string& path);

}  // namespace klms
