// Copyright 2026 The spectrakv Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

int main(int argc, char** argv) {
    return spectrakv::cli_main(argc, argv);
}
