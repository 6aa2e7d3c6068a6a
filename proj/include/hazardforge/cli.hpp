#pragma once

// The `hazardforge` command line: simulate, ingest, fuse, cv, train, monitor,
// evaluate and importance.
//
// Exit codes: 0 success, 2 input error, 3 data-degeneracy error. On failure a
// single JSON document {"error": {"kind": ..., "message": ...}} is written to
// the error stream.

#include <iosfwd>
#include <string>
#include <vector>

#include "hazardforge/error.hpp"

namespace hazardforge::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitDegenerate = 3;

int exit_code_for(ErrorKind kind);

// `args` excludes the program name. `in` backs `--data -` for monitor.
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
        std::ostream& err);

}  // namespace hazardforge::cli
