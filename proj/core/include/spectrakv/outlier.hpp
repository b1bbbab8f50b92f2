// Copyright 2026 The spectrakv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "spectrakv/spectral.hpp"
#include "spectrakv/tensor.hpp"

namespace spectrakv {

/// Low-pass reconstruction of a layer's keys and values along the token axis.
struct BaseKv {
    Tensor3 keys_base;
    Tensor3 values_base;
    double gamma = 1.0;
};

/// Per-position squared deviation from the base, averaged over heads and channels.
struct DeviationScores {
    std::vector<double> dev;
    std::vector<double> dev_k;
    std::vector<double> dev_v;

    std::size_t size() const noexcept { return dev.size(); }
};

struct SelectionResult {
    std::vector<std::size_t> retained; // strictly increasing
    std::size_t budget = 0;
    std::vector<std::size_t> forced;   // protected positions, subset of retained

    friend bool operator==(const SelectionResult&, const SelectionResult&) = default;
};

BaseKv compute_base_kv(const LayerKv& layer, double gamma);

/// Same as compute_base_kv, reusing an already computed spectrum.
BaseKv base_from_spectrum(const LayerSpectrum& spectrum, const DctPlan& plan, double gamma);

DeviationScores deviation_scores(const LayerKv& layer, const BaseKv& base);

/**
 * Keeps every protected position plus the highest-scoring remaining ones
 * until `budget` positions are retained (or all N are). Equal scores are
 * resolved in favour of the lower position. `protected_positions` must be
 * within [0, N); duplicates are ignored.
 *
 * Throws infeasible_budget when budget < |protected|.
 */
SelectionResult select_top_scores(std::span<const double> scores, std::size_t budget,
                                  std::span<const std::size_t> protected_positions);

SelectionResult select_outliers(const DeviationScores& scores, std::size_t budget,
                                std::span<const std::size_t> protected_positions);

} // namespace spectrakv
