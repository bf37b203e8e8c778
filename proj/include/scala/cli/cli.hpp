#pragma once

#include <iosfwd>

namespace scala::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

// Entry point of scala-opt. Results go to `out` as JSON (CSV for the
// table verbs); logs and errors go to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace scala::cli
