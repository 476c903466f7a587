#pragma once

#include <string>
#include <vector>

namespace paxl::cli {

// Exit codes: 0 success, 1 validation error (bad verb, key, or config),
// 2 runtime error. All artifacts land inside the resolved output directory.
int run(const std::vector<std::string>& args);

}  // namespace paxl::cli
