// Copyright 2026 The spectrakv Authors
// SPDX-License-Identifier: Apache-2.0

#include "spectrakv/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "spectrakv/error.hpp"
#include "spectrakv/fkv1.hpp"
#include "spectrakv/rng.hpp"
#include "spectrakv/spectral.hpp"

namespace spectrakv {

bool SynthSpec::separation_guaranteed(double gamma) const {
    double worst_noise = noise_sigma;
    for (const double s : layer_noise_sigmas) {
        worst_noise = std::max(worst_noise, s);
    }
    return base_modes < cutoff_index(seq_len, gamma) &&
           outlier_amplitude >= 10.0 * (base_amplitude + worst_noise);
}

void validate_synth_spec(const SynthSpec& spec) {
    const auto bad = [](const std::string& what) { fail(ErrorCode::invalid_argument, "synth spec: " + what); };
    if (spec.num_layers == 0 || spec.kv_heads == 0 || spec.head_dim == 0 || spec.seq_len == 0) {
        bad("num_layers, kv_heads, head_dim and seq_len must be >= 1");
    }
    if (spec.base_modes > spec.seq_len) {
        bad("base_modes exceeds seq_len");
    }
    if (spec.outliers_per_layer > spec.seq_len) {
        bad("outliers_per_layer exceeds seq_len");
    }
    if (!(spec.base_amplitude >= 0.0) || !(spec.outlier_amplitude >= 0.0) || !(spec.noise_sigma >= 0.0) ||
        !std::isfinite(spec.base_amplitude) || !std::isfinite(spec.outlier_amplitude) ||
        !std::isfinite(spec.noise_sigma)) {
        bad("amplitudes and noise_sigma must be finite and >= 0");
    }
    if (!(spec.spike_channel_fraction > 0.0 && spec.spike_channel_fraction <= 1.0)) {
        bad("spike_channel_fraction must lie in (0, 1]");
    }
    if (!spec.layer_noise_sigmas.empty()) {
        if (spec.layer_noise_sigmas.size() != spec.num_layers) {
            bad("layer_noise_sigmas needs one entry per layer");
        }
        for (const double s : spec.layer_noise_sigmas) {
            if (!(s >= 0.0) || !std::isfinite(s)) {
                bad("layer_noise_sigmas entries must be finite and >= 0");
            }
        }
    }
    if (spec.text_prefix + spec.text_suffix > spec.seq_len) {
        bad("text_prefix + text_suffix exceeds seq_len");
    }
}

namespace {

void fill_smooth(Tensor3& t, const std::vector<double>& basis, std::size_t modes, double amplitude, double sigma,
                 Rng& rng) {
    const std::size_t n = t.seq();
    const double coeff_scale = modes > 0 ? amplitude / std::sqrt(static_cast<double>(modes)) : 0.0;
    std::vector<double> coeffs(modes);
    std::vector<double> column(n);
    for (std::size_t h = 0; h < t.heads(); ++h) {
        for (std::size_t d = 0; d < t.dim(); ++d) {
            for (auto& a : coeffs) {
                a = rng.uniform(-coeff_scale, coeff_scale);
            }
            std::fill(column.begin(), column.end(), 0.0);
            for (std::size_t m = 0; m < modes; ++m) {
                const double* row = &basis[m * n];
                for (std::size_t i = 0; i < n; ++i) {
                    column[i] += coeffs[m] * row[i];
                }
            }
            for (std::size_t i = 0; i < n; ++i) {
                const double noise = sigma > 0.0 ? sigma * rng.normal() : 0.0;
                t.at(h, i, d) = static_cast<float>(column[i] + noise);
            }
        }
    }
}

void plant_spikes(Tensor3& t, std::span<const std::size_t> positions, double amplitude, double fraction, Rng& rng) {
    const std::size_t channels = t.heads() * t.dim();
    const auto count = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(fraction * static_cast<double>(channels))), 1, channels);
    for (const std::size_t p : positions) {
        for (const std::size_t c : rng.sample_sorted(channels, count)) {
            const std::size_t h = c / t.dim();
            const std::size_t d = c % t.dim();
            t.at(h, p, d) = static_cast<float>(t.at(h, p, d) + rng.sign() * amplitude);
        }
    }
}

} // namespace

SynthOutput generate(const SynthSpec& spec) {
    validate_synth_spec(spec);
    const std::size_t n = spec.seq_len;

    // cos(pi m (i + 1/2) / N), unnormalized, for the active modes
    std::vector<double> basis(spec.base_modes * n);
    for (std::size_t m = 0; m < spec.base_modes; ++m) {
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t phase = (m * (2 * i + 1)) % (4 * n);
            basis[m * n + i] = std::cos(std::numbers::pi * static_cast<double>(phase) / (2.0 * static_cast<double>(n)));
        }
    }

    SynthOutput out;
    out.dump.dtype = spec.dtype;
    out.dump.token_tags.assign(n, TokenTag::vision);
    for (std::size_t x = 0; x < spec.text_prefix; ++x) {
        out.dump.token_tags[x] = TokenTag::text;
    }
    for (std::size_t x = n - spec.text_suffix; x < n; ++x) {
        out.dump.token_tags[x] = TokenTag::text;
    }

    for (std::size_t l = 0; l < spec.num_layers; ++l) {
        Rng rng(mix_seed(spec.seed, l));
        auto planted = rng.sample_sorted(n, spec.outliers_per_layer);
        LayerKv layer{Tensor3(spec.kv_heads, n, spec.head_dim), Tensor3(spec.kv_heads, n, spec.head_dim), l};
        const double sigma = spec.noise_for_layer(l);
        fill_smooth(layer.keys, basis, spec.base_modes, spec.base_amplitude, sigma, rng);
        fill_smooth(layer.values, basis, spec.base_modes, spec.base_amplitude, sigma, rng);
        plant_spikes(layer.keys, planted, spec.outlier_amplitude, spec.spike_channel_fraction, rng);
        plant_spikes(layer.values, planted, spec.outlier_amplitude, spec.spike_channel_fraction, rng);
        if (spec.dtype == DType::f16) {
            for (Tensor3* t : {&layer.keys, &layer.values}) {
                for (std::size_t h = 0; h < t->heads(); ++h) {
                    for (float& v : t->head(h)) {
                        v = half_to_float(float_to_half(v));
                    }
                }
            }
        }
        out.dump.layers.push_back(std::move(layer));
        out.truth.planted.push_back(std::move(planted));
    }
    return out;
}

double planted_recall(std::span<const std::size_t> planted, std::span<const std::size_t> retained) {
    if (planted.empty()) {
        return 1.0;
    }
    std::size_t hits = 0;
    for (const std::size_t p : planted) {
        if (std::binary_search(retained.begin(), retained.end(), p)) {
            ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(planted.size());
}

} // namespace spectrakv
