#pragma once

#include <ostream>

namespace ldawa::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kValidation = 1;
inline constexpr int kRuntime = 2;

/// Entry point of the `ldawa` tool, with injectable output streams.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ldawa::cli
