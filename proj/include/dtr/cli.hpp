#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dtr::cli {

// Entry point behind the `dtr` binary. Returns the process exit code:
// 0 success, 2 usage, 3 config, 4 data integrity, 5 backend. Failures print a
// single line "error[<category>]: <message>" to err.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace dtr::cli
