#pragma once

#include <iosfwd>

namespace seqxfer::cli {

/// Runs one subcommand. Exit codes: 0 success, 1 data or model error,
/// 2 usage error. Reports go to `out`, diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace seqxfer::cli
