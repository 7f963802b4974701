#pragma once

#include "epistitch/error.hpp"

namespace epistitch {

/// 2 InsufficientMatches; 3 geometric failures; 4 I/O, parse, bounds and
/// invalid-input errors; 5 ExcessiveCanvas and ExcessiveGrid.
int exitCodeFor(ErrorCode code);

/// Entry point of the `epistitch` tool. Returns the process exit status
/// (1 for usage errors).
int runCli(int argc, char** argv);

}  // namespace epistitch
