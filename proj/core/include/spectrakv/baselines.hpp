// Copyright 2026 The spectrakv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

#include "spectrakv/outlier.hpp"
#include "spectrakv/tensor.hpp"

namespace spectrakv {

enum class PolicyId { recency_sink, random_seeded, value_norm, spectral };

std::string_view to_string(PolicyId policy) noexcept;
PolicyId parse_policy(std::string_view text);

struct BaselineOptions {
    std::size_t sink = 0;     // recency_sink: leading positions kept before the recent window
    std::uint64_t seed = 0;   // random_seeded
    double gamma = 0.2;       // spectral
};

/// Per-layer selection under one of the reference policies. Every policy
/// returns protected positions as `forced` and honours the SelectionResult
/// invariants; budget < |protected| throws infeasible_budget.
SelectionResult select_baseline(PolicyId policy, const LayerKv& layer, std::size_t budget,
                                std::span<const std::size_t> protected_positions, const BaselineOptions& options);

/// Head-averaged ||k_x||^2 + ||v_x||^2 for every position.
std::vector<double> value_norm_scores(const LayerKv& layer);

} // namespace spectrakv
