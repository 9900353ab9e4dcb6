#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace strokescope {

// Exit codes: 0 success, 1 operational error, 2 usage error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// `args` excludes the program name. Sketches named "-" are read from `in`.
int cli_main(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

int cli_main(int argc, char** argv);

} // namespace strokescope
