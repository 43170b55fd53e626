#pragma once

#include <string>
#include <vector>

namespace ccnn {

/// Full command-line driver, callable in-process (tests) or from main().
/// `args` excludes the program name. Exit codes: 0 success, 1 check
/// failure, 2 usage or input error.
int cli_main(std::vector<std::string> args);

}  // namespace ccnn
