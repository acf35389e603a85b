#pragma once

#include <iosfwd>

namespace klms::cli {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int failed = 1;     ///< comparison fail or unstable verdict
inline constexpr int config = 2;     ///< configuration, IO or horizon error
inline constexpr int numerical = 3;  ///< singular, ill-conditioned or diverged
}  // namespace exit_code

/// Entry point of the `klms` tool: subcommands dict, theory, simulate, compare.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace klms::cli
