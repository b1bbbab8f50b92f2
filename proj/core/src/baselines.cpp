// Copyright 2026 The spectrakv Authors
// SPDX-License-Identifier: Apache-2.0

#include "spectrakv/baselines.hpp"

#include <algorithm>
#include <string>
#include <vector>

#include "spectrakv/error.hpp"
#include "spectrakv/rng.hpp"

namespace spectrakv {

std::string_view to_string(PolicyId policy) noexcept {
    switch (policy) {
    case PolicyId::recency_sink: return "recency_sink";
    case PolicyId::random_seeded: return "random_seeded";
    case PolicyId::value_norm: return "value_norm";
    case PolicyId::spectral: return "spectral";
    }
    return "spectral";
}

PolicyId parse_policy(std::string_view text) {
    for (const auto p : {PolicyId::recency_sink, PolicyId::random_seeded, PolicyId::value_norm, PolicyId::spectral}) {
        if (text == to_string(p)) {
            return p;
        }
    }
    fail(ErrorCode::invalid_argument, "unknown policy '" + std::string(text) + "'");
}

std::vector<double> value_norm_scores(const LayerKv& layer) {
    std::vector<double> scores(layer.seq(), 0.0);
    for (const Tensor3* t : {&layer.keys, &layer.values}) {
        for (std::size_t h = 0; h < t->heads(); ++h) {
            for (std::size_t n = 0; n < t->seq(); ++n) {
                double acc = 0.0;
                for (const float v : t->row(h, n)) {
                    acc += static_cast<double>(v) * v;
                }
                scores[n] += acc;
            }
        }
    }
    for (auto& s : scores) {
        s /= static_cast<double>(layer.heads());
    }
    return scores;
}

namespace {

/// Scores that rank the first `sink` positions highest, then later positions above earlier ones.
std::vector<double> recency_scores(std::size_t n, std::size_t sink) {
    std::vector<double> scores(n);
    for (std::size_t x = 0; x < n; ++x) {
        scores[x] = x < sink ? static_cast<double>(2 * n) : static_cast<double>(x);
    }
    return scores;
}

SelectionResult random_selection(std::size_t n, std::size_t budget, std::span<const std::size_t> protected_positions,
                                 std::uint64_t seed) {
    // Let select_top_scores validate and collect the protected set, then
    // replace the scored part with a uniform sample of the remainder.
    const std::vector<double> flat(n, 0.0);
    SelectionResult result = select_top_scores(flat, budget, protected_positions);

    std::vector<char> taken(n, 0);
    for (const std::size_t p : result.forced) {
        taken[p] = 1;
    }
    std::vector<std::size_t> pool;
    for (std::size_t x = 0; x < n; ++x) {
        if (!taken[x]) {
            pool.push_back(x);
        }
    }
    const std::size_t extra = std::min(budget, n) - result.forced.size();
    Rng rng(seed);
    const auto picks = rng.sample_sorted(pool.size(), extra);
    result.retained = result.forced;
    for (const std::size_t i : picks) {
        result.retained.push_back(pool[i]);
    }
    std::sort(result.retained.begin(), result.retained.end());
    return result;
}

} // namespace

SelectionResult select_baseline(PolicyId policy, const LayerKv& layer, std::size_t budget,
                                std::span<const std::size_t> protected_positions, const BaselineOptions& options) {
    validate_layer(layer);
    const std::size_t n = layer.seq();
    switch (policy) {
    case PolicyId::recency_sink:
        return select_top_scores(recency_scores(n, options.sink), budget, protected_positions);
    case PolicyId::random_seeded:
        return random_selection(n, budget, protected_positions, mix_seed(options.seed, layer.layer_index));
    case PolicyId::value_norm:
        return select_top_scores(value_norm_scores(layer), budget, protected_positions);
    case PolicyId::spectral: {
        const BaseKv base = compute_base_kv(layer, options.gamma);
        return select_outliers(deviation_scores(layer, base), budget, protected_positions);
    }
    }
    fail(ErrorCode::invalid_argument, "unknown policy");
}

} // namespace spectrakv
