// Copyright 2026 The spectrakv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace spectrakv {

enum class ErrorCode {
    invalid_argument,
    non_finite,
    shape_mismatch,
    infeasible_budget,
    bad_magic,
    version_mismatch,
    truncated_payload,
    size_mismatch,
    malformed_header,
    malformed_payload,
    io_error,
};

/// Stable snake_case name, used in machine-readable CLI diagnostics.
std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), m_code(code) {}

    ErrorCode code() const noexcept { return m_code; }

private:
    ErrorCode m_code;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

} // namespace spectrakv
