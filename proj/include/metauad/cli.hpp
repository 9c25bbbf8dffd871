#pragma once

#include <string>
#include <vector>

namespace metauad {

inline constexpr const char* kToolVersion = "0.1.0";

// Config-file / flag keys a subcommand resolves, for manifest-completeness
// checks. Every key appears in the run manifest with its value and source.
std::vector<std::string> config_keys_for(const std::string& subcommand);

// Entry point behind the `metauad` binary. Exit codes: 0 success, 1 usage,
// 2 input format, 3 precondition violation, 4 numerical failure.
int dispatch(int argc, const char* const* argv);

}  // namespace metauad
