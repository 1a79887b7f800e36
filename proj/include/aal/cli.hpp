#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace aal {

// Exit codes: 0 success, 1 runtime failure, 2 invalid config or arguments.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace aal
