#pragma once

#include <iosfwd>

namespace ptlab {

/// Entry point of the `ptlab` tool. Returns 0 on success, 1 on validation
/// errors (bad flags, config, inputs) and 2 on runtime failures.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ptlab
