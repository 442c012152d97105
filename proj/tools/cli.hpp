#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mmv::cli {

enum ExitCode { ok = 0, validation = 1, runtime = 2, criterion_failed = 3 };

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mmv::cli
