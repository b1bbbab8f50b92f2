// Copyright 2026 The spectrakv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "spectrakv/cache.hpp"

namespace spectrakv {

/**
 * Recipe for a synthetic dump whose channels are smooth low-band signals
 * with sparse planted spikes.
 *
 * Every (head, channel) column of K and V is
 *   x[i] = sum_{m < base_modes} a_m cos(pi m (i + 1/2) / N) + noise_sigma * z_i
 * with a_m uniform in [-base_amplitude, base_amplitude] / sqrt(base_modes)
 * and z_i standard normal. At each planted position a spike of
 * +-outlier_amplitude is added to a random spike_channel_fraction of the
 * (head, channel) pairs, drawn independently for K and V.
 */
struct SynthSpec {
    std::size_t num_layers = 4;
    std::size_t kv_heads = 2;
    std::size_t head_dim = 32;
    std::size_t seq_len = 512;
    std::size_t base_modes = 8;
    double base_amplitude = 1.0;
    std::size_t outliers_per_layer = 16;
    double outlier_amplitude = 12.0;
    double noise_sigma = 0.1;
    double spike_channel_fraction = 0.25;
    std::uint64_t seed = 0;
    /// Overrides noise_sigma per layer when non-empty (one entry per layer).
    std::vector<double> layer_noise_sigmas;
    std::size_t text_prefix = 0;  // leading text-tagged positions; the rest are vision
    std::size_t text_suffix = 0;  // trailing text-tagged positions
    DType dtype = DType::f32;

    double noise_for_layer(std::size_t layer) const {
        return layer_noise_sigmas.empty() ? noise_sigma : layer_noise_sigmas.at(layer);
    }

    /// True when spikes dominate the base by the 10x margin and the base
    /// modes sit strictly below the low-pass cutoff for `gamma`.
    bool separation_guaranteed(double gamma) const;
};

struct SynthTruth {
    std::vector<std::vector<std::size_t>> planted; // per layer, ascending
};

struct SynthOutput {
    KvDump dump;
    SynthTruth truth;
};

/// Throws invalid_argument for infeasible specs (k > N, zero geometry, ...).
void validate_synth_spec(const SynthSpec& spec);

SynthOutput generate(const SynthSpec& spec);

/// Fraction of truth positions present in `retained` (1 when nothing was planted).
double planted_recall(std::span<const std::size_t> planted, std::span<const std::size_t> retained);

} // namespace spectrakv
