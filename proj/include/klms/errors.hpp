#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace klms {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

/// A matrix needed for an expectation is singular or not positive definite.
class SingularMatrix : public Error {
public:
    using Error::Error;
};

class IllConditioned : public Error {
public:
    using Error::Error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class NonFinite : public Error {
public:
    using Error::Error;
};

/// Raised when an iteration (filter or covariance recursion) blows up.
class Diverged : public Error {
public:
    Diverged(const std::string& what, std::size_t iteration, std::size_t run = npos)
        : Error(what), iteration_(iteration), run_(run) {}

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    std::size_t iteration() const noexcept { return iteration_; }
    /// Monte Carlo run index, or npos when not raised from a batch.
    std::size_t run() const noexcept { return run_; }

private:
    std::size_t iteration_;
    std::size_t run_;
};

class Unstable : public Error {
public:
    Unstable(const std::string& what, double spectral_radius)
        : Error(what), spectral_radius_(spectral_radius) {}
    double spectral_radius() const noexcept { return spectral_radius_; }

private:
    double spectral_radius_;
};

class HorizonMismatch : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace klms
