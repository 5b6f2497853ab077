#pragma once

#include <iosfwd>

namespace catsim {

// Entry point of the command-line tool. Returns 0 on success, 2 on a
// validation error (bad flag, config or input file), 3 on a solver failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace catsim
