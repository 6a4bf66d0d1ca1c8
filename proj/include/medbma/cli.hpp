#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace medbma::cli {

inline constexpr const char* kVersion = "0.1.0";

// Exit codes: 0 success, 2 usage or input error, 3 numerical failure.
int run(int argc, const char* const* argv);
// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace medbma::cli
