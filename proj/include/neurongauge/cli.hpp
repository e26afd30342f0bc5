#pragma once

#include <iosfwd>

namespace ngauge {

/// Entry point of the `neurongauge` tool. Results go to `out`, diagnostics to
/// `err`. Returns the process exit status: 0 success, 2 I/O, 3 validation,
/// 4 degenerate math, 5 configuration or usage.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ngauge
