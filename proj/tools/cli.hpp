#pragma once

#include <iostream>
#include <string>
#include <vector>

namespace segdet::cli {

/// Exit codes: 0 success, 1 runtime error, 2 configuration or usage error.
int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr);
int run(int argc, const char* const* argv);

}  // namespace segdet::cli
