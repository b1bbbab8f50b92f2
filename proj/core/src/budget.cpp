// Copyright 2026 The spectrakv Authors
// SPDX-License-Identifier: Apache-2.0

#include "spectrakv/budget.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "spectrakv/error.hpp"

namespace spectrakv {

namespace {

constexpr double kRemainderTolerance = 1e-9;

double high_band_fraction(std::span<const double> coeffs, std::size_t heads, std::size_t seq, std::size_t dim,
                          std::size_t cutoff) {
    double high = 0.0;
    double total = 0.0;
    for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t m = 0; m < seq; ++m) {
            const double* row = &coeffs[(h * seq + m) * dim];
            double band = 0.0;
            for (std::size_t d = 0; d < dim; ++d) {
                band += row[d] * row[d];
            }
            total += band;
            if (m >= cutoff) {
                high += band;
            }
        }
    }
    return total > 0.0 ? std::clamp(high / total, 0.0, 1.0) : 0.0;
}

/// Sum over layers of clamp(lambda * w, lo, hi).
double filled_total(double lambda, std::span<const double> w, std::span<const double> lo, std::span<const double> hi) {
    double sum = 0.0;
    for (std::size_t l = 0; l < w.size(); ++l) {
        sum += std::clamp(lambda * w[l], lo[l], hi[l]);
    }
    return sum;
}

/**
 * Finds lambda with sum clamp(lambda * w_l, lo_l, hi_l) == target over the
 * layers in `members` (all with w > 0) and writes the clamped shares. The
 * function is piecewise linear in lambda with kinks at lo/w and hi/w, so the
 * root is located exactly between two neighbouring kinks.
 */
void water_fill(std::span<const std::size_t> members, std::span<const double> weights,
                std::span<const double> floors, std::span<const double> caps, double target,
                std::vector<double>& shares) {
    if (members.empty()) {
        return;
    }
    std::vector<double> w;
    std::vector<double> lo;
    std::vector<double> hi;
    std::vector<double> kinks{0.0};
    for (const std::size_t l : members) {
        w.push_back(weights[l]);
        lo.push_back(floors[l]);
        hi.push_back(caps[l]);
        kinks.push_back(floors[l] / weights[l]);
        kinks.push_back(caps[l] / weights[l]);
    }
    std::sort(kinks.begin(), kinks.end());
    kinks.erase(std::unique(kinks.begin(), kinks.end()), kinks.end());

    double lambda = kinks.back();
    for (std::size_t j = 1; j < kinks.size(); ++j) {
        const double upper = filled_total(kinks[j], w, lo, hi);
        if (upper >= target) {
            const double lower_lambda = kinks[j - 1];
            const double lower = filled_total(lower_lambda, w, lo, hi);
            // slope on (kinks[j-1], kinks[j]): weights of layers strictly between floor and cap
            const double mid = 0.5 * (lower_lambda + kinks[j]);
            double slope = 0.0;
            for (std::size_t i = 0; i < w.size(); ++i) {
                if (mid * w[i] > lo[i] && mid * w[i] < hi[i]) {
                    slope += w[i];
                }
            }
            lambda = slope > 0.0 ? lower_lambda + (target - lower) / slope : kinks[j];
            break;
        }
    }
    for (std::size_t i = 0; i < members.size(); ++i) {
        shares[members[i]] = std::clamp(lambda * w[i], lo[i], hi[i]);
    }
}

} // namespace

std::string_view to_string(AllocationMode mode) noexcept {
    return mode == AllocationMode::uniform ? "uniform" : "dynamic";
}

AllocationMode parse_allocation_mode(std::string_view text) {
    if (text == "dynamic") {
        return AllocationMode::dynamic;
    }
    if (text == "uniform") {
        return AllocationMode::uniform;
    }
    fail(ErrorCode::invalid_argument, "unknown allocation mode '" + std::string(text) + "'");
}

LayerEnergyRatio energy_ratio_from_spectrum(const LayerSpectrum& spectrum, double gamma, std::size_t layer_index) {
    const std::size_t cutoff = cutoff_index(spectrum.seq, gamma);
    LayerEnergyRatio out;
    out.layer_index = layer_index;
    out.r_k = high_band_fraction(spectrum.keys, spectrum.heads, spectrum.seq, spectrum.dim, cutoff);
    out.r_v = high_band_fraction(spectrum.values, spectrum.heads, spectrum.seq, spectrum.dim, cutoff);
    out.r = out.r_k + out.r_v;
    return out;
}

LayerEnergyRatio layer_energy_ratio(const LayerKv& layer, double gamma) {
    validate_gamma(gamma);
    validate_layer(layer);
    const DctPlan plan(layer.seq());
    return energy_ratio_from_spectrum(compute_layer_spectrum(layer, plan), gamma, layer.layer_index);
}

std::size_t total_budget_for(double rho, std::span<const std::size_t> lengths) {
    if (!(rho > 0.0 && rho <= 1.0)) {
        fail(ErrorCode::invalid_argument, "rho must lie in (0, 1], got " + std::to_string(rho));
    }
    const auto positions = std::accumulate(lengths.begin(), lengths.end(), std::size_t{0});
    return static_cast<std::size_t>(std::llround(rho * static_cast<double>(positions)));
}

BudgetAllocation allocate(std::span<const LayerEnergyRatio> ratios, double rho,
                          std::span<const std::size_t> lengths, std::span<const std::size_t> floors,
                          AllocationMode mode) {
    const std::size_t layers = lengths.size();
    if (layers == 0) {
        fail(ErrorCode::invalid_argument, "allocate: at least one layer is required");
    }
    // no floors means all zero
    const std::vector<std::size_t> zero_floors(floors.empty() ? layers : 0, 0);
    if (floors.empty()) {
        floors = zero_floors;
    }
    if (floors.size() != layers || (mode == AllocationMode::dynamic && ratios.size() != layers)) {
        fail(ErrorCode::shape_mismatch, "allocate: ratios, lengths and floors must have one entry per layer");
    }
    for (std::size_t l = 0; l < layers; ++l) {
        if (floors[l] > lengths[l]) {
            fail(ErrorCode::invalid_argument, "layer " + std::to_string(l) + ": floor " + std::to_string(floors[l]) +
                                                  " exceeds layer length " + std::to_string(lengths[l]));
        }
    }

    BudgetAllocation out;
    out.global_ratio = rho;
    out.mode = mode;
    out.total_budget = total_budget_for(rho, lengths);
    const auto floor_sum = std::accumulate(floors.begin(), floors.end(), std::size_t{0});
    if (floor_sum > out.total_budget) {
        fail(ErrorCode::infeasible_budget, "protected positions need " + std::to_string(floor_sum) +
                                               " slots but the budget is " + std::to_string(out.total_budget));
    }

    std::vector<double> weights(layers, 1.0);
    if (mode == AllocationMode::dynamic) {
        double sum = 0.0;
        for (std::size_t l = 0; l < layers; ++l) {
            if (!(std::isfinite(ratios[l].r) && ratios[l].r >= 0.0)) {
                fail(ErrorCode::invalid_argument, "layer " + std::to_string(l) + ": energy ratio must be finite and >= 0");
            }
            sum += ratios[l].r;
        }
        if (sum > 0.0) {
            for (std::size_t l = 0; l < layers; ++l) {
                weights[l] = ratios[l].r / sum;
            }
        }
    }

    std::vector<double> lo(floors.begin(), floors.end());
    std::vector<double> hi(lengths.begin(), lengths.end());
    std::vector<double> shares(lo);
    std::vector<std::size_t> weighted;
    std::vector<std::size_t> unweighted;
    double weighted_capacity = 0.0;
    double unweighted_floor = 0.0;
    for (std::size_t l = 0; l < layers; ++l) {
        if (weights[l] > 0.0) {
            weighted.push_back(l);
            weighted_capacity += hi[l];
        } else {
            unweighted.push_back(l);
            unweighted_floor += lo[l];
        }
    }
    const double target = static_cast<double>(out.total_budget);
    if (weighted_capacity + unweighted_floor >= target) {
        water_fill(weighted, weights, lo, hi, target - unweighted_floor, shares);
    } else {
        for (const std::size_t l : weighted) {
            shares[l] = hi[l];
        }
        const std::vector<double> flat(layers, 1.0);
        water_fill(unweighted, flat, lo, hi, target - weighted_capacity, shares);
    }

    // Largest-remainder rounding; the tolerance keeps shares like 2.9999999999
    // from losing a unit to float noise and treats near-equal remainders as ties.
    out.quotas.resize(layers);
    std::vector<double> remainder(layers);
    std::vector<double> rank_key(layers);
    std::size_t assigned = 0;
    for (std::size_t l = 0; l < layers; ++l) {
        const double whole = std::floor(shares[l] + kRemainderTolerance);
        out.quotas[l] = std::clamp(static_cast<std::size_t>(whole), floors[l], lengths[l]);
        remainder[l] = shares[l] - static_cast<double>(out.quotas[l]);
        assigned += out.quotas[l];
        // quantized so remainders within the tolerance compare equal
        rank_key[l] = std::round(remainder[l] / kRemainderTolerance);
    }
    std::vector<std::size_t> order(layers);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return rank_key[a] > rank_key[b];
    });
    while (assigned < out.total_budget) {
        bool progressed = false;
        for (const std::size_t l : order) {
            if (assigned == out.total_budget) {
                break;
            }
            if (out.quotas[l] < lengths[l]) {
                ++out.quotas[l];
                ++assigned;
                progressed = true;
            }
        }
        if (!progressed) {
            break;
        }
    }
    while (assigned > out.total_budget) {
        bool progressed = false;
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            if (assigned == out.total_budget) {
                break;
            }
            if (out.quotas[*it] > floors[*it]) {
                --out.quotas[*it];
                --assigned;
                progressed = true;
            }
        }
        if (!progressed) {
            break;
        }
    }
    return out;
}

BudgetAllocation allocate(std::span<const LayerEnergyRatio> ratios, double rho, std::size_t per_layer_len,
                          std::span<const std::size_t> floors, AllocationMode mode) {
    const std::vector<std::size_t> lengths(ratios.size(), per_layer_len);
    return allocate(ratios, rho, lengths, floors, mode);
}

} // namespace spectrakv
