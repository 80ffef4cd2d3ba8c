#pragma once

#include <string>
#include <vector>

namespace otdistill::cli {

// Dispatches a full command line (excluding the program name) and returns
// the process exit code: 0 success, 1 usage or configuration error,
// 2 runtime numeric error. Log text goes to stderr; data only to files.
int run(const std::vector<std::string>& args);

int run(int argc, const char* const* argv);

}  // namespace otdistill::cli
