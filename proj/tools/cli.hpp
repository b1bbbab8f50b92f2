// Copyright 2026 The spectrakv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace spectrakv {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitInternal = 1,
    kExitUsage = 2,        // unknown, missing or conflicting flags
    kExitIo = 3,           // unreadable input or unwritable output
    kExitFormat = 4,       // malformed FKV1 file
    kExitInfeasible = 5,   // protected positions exceed the budget
    kExitInvalidInput = 6, // bad values, shapes or non-finite data
};

int cli_main(int argc, char** argv);

/// Runs one invocation; `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace spectrakv
