#pragma once

#include <ostream>

namespace threadsel {

// Entry point of the `threadsel` tool. Returns 0 on success, 1 on a runtime
// or data error and 2 on a usage error.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace threadsel
