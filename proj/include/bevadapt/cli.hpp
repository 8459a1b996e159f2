#pragma once

#include <string>
#include <vector>

namespace bevadapt::cli {

// Dispatches one command. Exit codes: 0 success, 1 runtime failure, 2 usage
// error. Kept callable in-process for tests.
int run(const std::vector<std::string>& args);

} // namespace bevadapt::cli
