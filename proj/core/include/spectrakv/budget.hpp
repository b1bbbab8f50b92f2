// Copyright 2026 The spectrakv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "spectrakv/spectral.hpp"
#include "spectrakv/tensor.hpp"

namespace spectrakv {

/// Fraction of a layer's key and value energy above the low-pass cutoff.
struct LayerEnergyRatio {
    double r_k = 0.0;
    double r_v = 0.0;
    double r = 0.0; // r_k + r_v
    std::size_t layer_index = 0;
};

enum class AllocationMode { dynamic, uniform };

std::string_view to_string(AllocationMode mode) noexcept;
AllocationMode parse_allocation_mode(std::string_view text);

struct BudgetAllocation {
    std::vector<std::size_t> quotas;
    double global_ratio = 1.0;
    std::size_t total_budget = 0;
    AllocationMode mode = AllocationMode::dynamic;
};

LayerEnergyRatio layer_energy_ratio(const LayerKv& layer, double gamma);
LayerEnergyRatio energy_ratio_from_spectrum(const LayerSpectrum& spectrum, double gamma, std::size_t layer_index);

/// round(rho * sum(lengths)), half away from zero.
std::size_t total_budget_for(double rho, std::span<const std::size_t> lengths);

/**
 * Splits round(rho * sum(lengths)) positions over layers.
 *
 * Dynamic mode weights layers by r / sum(r) (uniform if every r is zero);
 * uniform mode weights them equally. Each layer's real-valued share is the
 * water-filling solution clamp(lambda * w, floor, cap) with caps = lengths,
 * so surplus above a cap flows to the remaining layers in proportion to
 * their weights and deficits below a floor are taken from them the same way.
 * Shares are then rounded by largest remainder, lower layer index first on
 * ties. If positive-weight layers saturate before the budget is spent, the
 * rest goes to zero-weight layers uniformly.
 *
 * Throws infeasible_budget when sum(floors) exceeds the total budget.
 */
BudgetAllocation allocate(std::span<const LayerEnergyRatio> ratios, double rho,
                          std::span<const std::size_t> lengths, std::span<const std::size_t> floors,
                          AllocationMode mode);

BudgetAllocation allocate(std::span<const LayerEnergyRatio> ratios, double rho, std::size_t per_layer_len,
                          std::span<const std::size_t> floors, AllocationMode mode);

} // namespace spectrakv
