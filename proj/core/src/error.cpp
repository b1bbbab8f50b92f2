// Copyright 2026 The spectrakv Authors
// SPDX-License-Identifier: Apache-2.0

#include "spectrakv/error.hpp"

namespace spectrakv {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::non_finite: return "non_finite";
    case ErrorCode::shape_mismatch: return "shape_mismatch";
    case ErrorCode::infeasible_budget: return "infeasible_budget";
    case ErrorCode::bad_magic: return "bad_magic";
    case ErrorCode::version_mismatch: return "version_mismatch";
    case ErrorCode::truncated_payload: return "truncated_payload";
    case ErrorCode::size_mismatch: return "size_mismatch";
    case ErrorCode::malformed_header: return "malformed_header";
    case ErrorCode::malformed_payload: return "malformed_payload";
    case ErrorCode::io_error: return "io_error";
    }
    return "unknown";
}

void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

} // namespace spectrakv
