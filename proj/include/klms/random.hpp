#pragma once

#include <cstdint>
#include <random>

namespace klms {

using Rng = std::mt19937_64;

/// Seed for an independent sub-stream, mixed from a master seed and a stream id.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept;

// Stream identifiers used by the experiment harness.
namespace streams {
inline constexpr std::uint64_t dictionary = 0x64696374ULL;
inline constexpr std::uint64_t theory = 0x7468656fULL;
inline constexpr std::uint64_t bootstrap = 0x626f6f74ULL;
inline constexpr std::uint64_t run_base = 0x1000000ULL;
}  // namespace streams

}  // namespace klms
