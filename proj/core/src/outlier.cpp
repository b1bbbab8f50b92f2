// Copyright 2026 The spectrakv Authors
// SPDX-License-Identifier: Apache-2.0

#include "spectrakv/outlier.hpp"

#include <algorithm>
#include <string>

#include "spectrakv/error.hpp"

namespace spectrakv {

BaseKv compute_base_kv(const LayerKv& layer, double gamma) {
    validate_gamma(gamma);
    validate_layer(layer);
    const DctPlan plan(layer.seq());
    return base_from_spectrum(compute_layer_spectrum(layer, plan), plan, gamma);
}

BaseKv base_from_spectrum(const LayerSpectrum& spectrum, const DctPlan& plan, double gamma) {
    const std::size_t bands = cutoff_index(spectrum.seq, gamma);
    BaseKv base;
    base.gamma = gamma;
    base.keys_base = reconstruct_lowpass(spectrum.keys, spectrum.heads, spectrum.dim, plan, bands);
    base.values_base = reconstruct_lowpass(spectrum.values, spectrum.heads, spectrum.dim, plan, bands);
    return base;
}

namespace {

std::vector<double> mean_squared_residual(const Tensor3& original, const Tensor3& base) {
    const std::size_t seq = original.seq();
    const std::size_t dim = original.dim();
    std::vector<double> out(seq, 0.0);
    for (std::size_t h = 0; h < original.heads(); ++h) {
        const auto a = original.head(h);
        const auto b = base.head(h);
        for (std::size_t n = 0; n < seq; ++n) {
            double acc = 0.0;
            for (std::size_t d = 0; d < dim; ++d) {
                const double diff = static_cast<double>(a[n * dim + d]) - static_cast<double>(b[n * dim + d]);
                acc += diff * diff;
            }
            out[n] += acc;
        }
    }
    const double count = static_cast<double>(original.heads() * dim);
    for (auto& v : out) {
        v /= count;
    }
    return out;
}

} // namespace

DeviationScores deviation_scores(const LayerKv& layer, const BaseKv& base) {
    if (!layer.keys.same_shape(base.keys_base) || !layer.values.same_shape(base.values_base) ||
        !layer.keys.same_shape(layer.values)) {
        fail(ErrorCode::shape_mismatch,
             "deviation_scores: base KV shape differs from layer " + std::to_string(layer.layer_index));
    }
    DeviationScores out;
    out.dev_k = mean_squared_residual(layer.keys, base.keys_base);
    out.dev_v = mean_squared_residual(layer.values, base.values_base);
    out.dev.resize(out.dev_k.size());
    for (std::size_t x = 0; x < out.dev.size(); ++x) {
        out.dev[x] = out.dev_k[x] + out.dev_v[x];
    }
    return out;
}

SelectionResult select_top_scores(std::span<const double> scores, std::size_t budget,
                                  std::span<const std::size_t> protected_positions) {
    const std::size_t n = scores.size();
    std::vector<char> is_protected(n, 0);
    SelectionResult result;
    result.budget = budget;
    for (const std::size_t p : protected_positions) {
        if (p >= n) {
            fail(ErrorCode::invalid_argument,
                 "protected position " + std::to_string(p) + " outside [0, " + std::to_string(n) + ")");
        }
        if (!is_protected[p]) {
            is_protected[p] = 1;
            result.forced.push_back(p);
        }
    }
    std::sort(result.forced.begin(), result.forced.end());
    if (budget < result.forced.size()) {
        fail(ErrorCode::infeasible_budget, "budget " + std::to_string(budget) + " is smaller than the " +
                                               std::to_string(result.forced.size()) + " protected positions");
    }

    std::vector<std::size_t> candidates;
    candidates.reserve(n - result.forced.size());
    for (std::size_t x = 0; x < n; ++x) {
        if (!is_protected[x]) {
            candidates.push_back(x);
        }
    }
    const std::size_t take = std::min(budget, n) - result.forced.size();
    const auto higher = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) {
            return scores[a] > scores[b];
        }
        return a < b;
    };
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take), candidates.end(),
                      higher);
    candidates.resize(take);

    result.retained = result.forced;
    result.retained.insert(result.retained.end(), candidates.begin(), candidates.end());
    std::sort(result.retained.begin(), result.retained.end());
    return result;
}

SelectionResult select_outliers(const DeviationScores& scores, std::size_t budget,
                                std::span<const std::size_t> protected_positions) {
    return select_top_scores(scores.dev, budget, protected_positions);
}

} // namespace spectrakv
