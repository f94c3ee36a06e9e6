#pragma once

#include <string>
#include <vector>

namespace relgraph::cli {

// Runs one subcommand. Exit codes: 0 success, 1 usage error, 2 data or
// validation error, 3 numeric failure.
int dispatch(const std::vector<std::string>& args);
int dispatch(int argc, const char* const* argv);

}  // namespace relgraph::cli
