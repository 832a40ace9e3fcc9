#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace sbd::cli {

/// Runs one `sbd` invocation; args excludes the program name. Returns the
/// process exit code: 0 success, 1 usage, 2 data or format, 3 numerical.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sbd::cli
