#pragma once

#include <iosfwd>

namespace abthmm {

/// Runs one command line. Returns 0 on success, 1 on a domain or file
/// error, 2 on a usage error.
int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace abthmm
