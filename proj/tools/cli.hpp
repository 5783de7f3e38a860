#pragma once

#include <ostream>

namespace voltvar::cli {

/// Entry point shared by the `voltvar` binary and the in-process tests.
/// Returns 0 on success, 1 on numerical failure, 2 on input errors.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace voltvar::cli
