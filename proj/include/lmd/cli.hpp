#pragma once

#include <string_view>

namespace lmd {

inline constexpr std::string_view kToolVersion = "0.1.0";

/// Runs the `lmdetect` command line. Returns 0 on success, 1 on a runtime
/// error and 2 on a usage error.
int dispatch(int argc, const char* const* argv);

} // namespace lmd
