// Copyright 2026 The spectrakv Authors
// SPDX-License-Identifier: Apache-2.0

#include "spectrakv/cache.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "parallel.hpp"
#include "spectrakv/error.hpp"
#include "spectrakv/rng.hpp"

namespace spectrakv {

std::string_view to_string(EvictionScope scope) noexcept {
    return scope == EvictionScope::vision_only ? "vision" : "all";
}

EvictionScope parse_eviction_scope(std::string_view text) {
    if (text == "all") {
        return EvictionScope::all_tokens;
    }
    if (text == "vision") {
        return EvictionScope::vision_only;
    }
    fail(ErrorCode::invalid_argument, "unknown eviction scope '" + std::string(text) + "' (expected all|vision)");
}

void validate_dump(const KvDump& dump) {
    if (dump.layers.empty()) {
        fail(ErrorCode::invalid_argument, "dump has no layers");
    }
    const LayerKv& first = dump.layers.front();
    for (std::size_t l = 0; l < dump.layers.size(); ++l) {
        const LayerKv& layer = dump.layers[l];
        if (layer.layer_index != l) {
            fail(ErrorCode::invalid_argument, "layer " + std::to_string(l) + " carries index " +
                                                  std::to_string(layer.layer_index));
        }
        if (!layer.keys.same_shape(first.keys)) {
            fail(ErrorCode::shape_mismatch, "layer " + std::to_string(l) + " geometry differs from layer 0");
        }
        validate_layer(layer);
    }
    if (dump.token_tags.size() != first.seq()) {
        fail(ErrorCode::shape_mismatch, "token_tags has " + std::to_string(dump.token_tags.size()) +
                                            " entries, expected seq_len " + std::to_string(first.seq()));
    }
}

void validate_config(const CompressionConfig& config) {
    if (!(config.rho > 0.0 && config.rho <= 1.0)) {
        fail(ErrorCode::invalid_argument, "rho must lie in (0, 1], got " + std::to_string(config.rho));
    }
    validate_gamma(config.gamma);
}

std::vector<std::size_t> protected_positions(const CompressionConfig& config, std::span<const TokenTag> tags) {
    const std::size_t n = tags.size();
    std::vector<char> mark(n, 0);
    for (std::size_t x = 0; x < std::min(config.sink_count, n); ++x) {
        mark[x] = 1;
    }
    for (std::size_t x = n - std::min(config.recent_count, n); x < n; ++x) {
        mark[x] = 1;
    }
    if (config.eviction_scope == EvictionScope::vision_only) {
        for (std::size_t x = 0; x < n; ++x) {
            if (tags[x] == TokenTag::text) {
                mark[x] = 1;
            }
        }
    }
    std::vector<std::size_t> out;
    for (std::size_t x = 0; x < n; ++x) {
        if (mark[x]) {
            out.push_back(x);
        }
    }
    return out;
}

void validate_plan(const KvDump& dump, const RetentionPlan& plan) {
    const std::size_t layers = dump.num_layers();
    const std::size_t n = dump.seq_len();
    if (plan.num_layers != layers || plan.seq_len != n || plan.kv_heads != dump.kv_heads() ||
        plan.head_dim != dump.head_dim()) {
        fail(ErrorCode::invalid_argument, "plan geometry does not match the dump");
    }
    if (plan.per_layer.size() != layers || plan.allocation.quotas.size() != layers) {
        fail(ErrorCode::invalid_argument, "plan must carry one selection and one quota per layer");
    }
    for (std::size_t l = 0; l < layers; ++l) {
        const auto& retained = plan.per_layer[l].retained;
        if (retained.size() != plan.allocation.quotas[l]) {
            fail(ErrorCode::invalid_argument, "layer " + std::to_string(l) + ": retained count differs from quota");
        }
        for (std::size_t j = 0; j < retained.size(); ++j) {
            if (retained[j] >= n || (j > 0 && retained[j] <= retained[j - 1])) {
                fail(ErrorCode::invalid_argument,
                     "layer " + std::to_string(l) + ": retained positions must be strictly increasing and < seq_len");
            }
        }
    }
}

// ---------------------------------------------------------------------------
// CompressedCache

void CompressedCache::add_layer(LayerKv layer, std::vector<std::size_t> positions, std::vector<TokenTag> tags,
                                std::size_t next_position) {
    m_layers.push_back(std::move(layer));
    m_position_maps.push_back(std::move(positions));
    m_token_tags.push_back(std::move(tags));
    m_next_position.push_back(next_position);
}

void CompressedCache::append(std::size_t layer_index, const Tensor3& new_k, const Tensor3& new_v, TokenTag tag) {
    if (layer_index >= m_layers.size()) {
        fail(ErrorCode::invalid_argument, "append: layer " + std::to_string(layer_index) + " does not exist");
    }
    LayerKv& layer = m_layers[layer_index];
    const auto check = [&](const Tensor3& t, const char* name) {
        if (t.heads() != layer.keys.heads() || t.seq() != 1 || t.dim() != layer.keys.dim()) {
            fail(ErrorCode::shape_mismatch, std::string("append: ") + name + " must be [" +
                                                std::to_string(layer.keys.heads()) + ", 1, " +
                                                std::to_string(layer.keys.dim()) + "]");
        }
    };
    check(new_k, "new_k");
    check(new_v, "new_v");

    std::vector<float> flat(new_k.heads() * new_k.dim());
    const auto pack = [&](const Tensor3& t) {
        for (std::size_t h = 0; h < t.heads(); ++h) {
            const auto r = t.row(h, 0);
            std::copy(r.begin(), r.end(), flat.begin() + static_cast<std::ptrdiff_t>(h * t.dim()));
        }
    };
    pack(new_k);
    layer.keys.append_position(flat);
    pack(new_v);
    layer.values.append_position(flat);
    m_position_maps[layer_index].push_back(m_next_position[layer_index]++);
    m_token_tags[layer_index].push_back(tag);
}

// ---------------------------------------------------------------------------
// Pipeline

double retained_energy_fraction(const LayerKv& layer, std::span<const std::size_t> retained) {
    std::vector<double> row_energy(layer.seq(), 0.0);
    for (const Tensor3* t : {&layer.keys, &layer.values}) {
        for (std::size_t h = 0; h < t->heads(); ++h) {
            for (std::size_t n = 0; n < t->seq(); ++n) {
                for (const float v : t->row(h, n)) {
                    row_energy[n] += static_cast<double>(v) * v;
                }
            }
        }
    }
    const double total = std::accumulate(row_energy.begin(), row_energy.end(), 0.0);
    if (total <= 0.0) {
        return 1.0;
    }
    if (retained.size() == layer.seq()) {
        return 1.0;
    }
    double kept = 0.0;
    for (const std::size_t x : retained) {
        kept += row_energy[x];
    }
    return kept / total;
}

namespace {

DeviationSummary summarize(std::span<const double> dev) {
    DeviationSummary s;
    if (dev.empty()) {
        return s;
    }
    const auto [lo, hi] = std::minmax_element(dev.begin(), dev.end());
    s.min = *lo;
    s.max = *hi;
    s.mean = std::accumulate(dev.begin(), dev.end(), 0.0) / static_cast<double>(dev.size());
    return s;
}

[[noreturn]] void rethrow_with_layer(const Error& e, std::size_t layer) {
    throw Error(e.code(), "layer " + std::to_string(layer) + ": " + e.what());
}

} // namespace

CompressionResult compress(const KvDump& dump, const CompressionConfig& config) {
    validate_config(config);
    validate_dump(dump);
    const std::size_t layers = dump.num_layers();
    const std::size_t n = dump.seq_len();
    const std::vector<std::size_t> protect = protected_positions(config, dump.token_tags);

    const DctPlan plan(n);
    std::vector<DeviationScores> scores(layers);
    std::vector<LayerEnergyRatio> ratios(layers);
    detail::parallel_for(layers, config.threads, [&](std::size_t l) {
        const LayerKv& layer = dump.layers[l];
        const LayerSpectrum spectrum = compute_layer_spectrum(layer, plan);
        ratios[l] = energy_ratio_from_spectrum(spectrum, config.gamma, l);
        scores[l] = deviation_scores(layer, base_from_spectrum(spectrum, plan, config.gamma));
    });

    const std::vector<std::size_t> floors(layers, protect.size());
    CompressionResult result;
    RetentionPlan& out = result.plan;
    out.allocation = allocate(ratios, config.rho, n, floors, config.allocation_mode);
    out.config_echo = config;
    out.num_layers = layers;
    out.kv_heads = dump.kv_heads();
    out.head_dim = dump.head_dim();
    out.seq_len = n;
    out.dtype = dump.dtype;
    out.per_layer.resize(layers);
    out.stats.resize(layers);

    const BaselineOptions options{config.sink_count, config.seed, config.gamma};
    detail::parallel_for(layers, config.threads, [&](std::size_t l) {
        const std::size_t quota = out.allocation.quotas[l];
        try {
            out.per_layer[l] = config.policy == PolicyId::spectral
                                   ? select_outliers(scores[l], quota, protect)
                                   : select_baseline(config.policy, dump.layers[l], quota, protect, options);
        } catch (const Error& e) {
            rethrow_with_layer(e, l);
        }
        out.stats[l].energy_ratio = ratios[l];
        out.stats[l].energy_retained = retained_energy_fraction(dump.layers[l], out.per_layer[l].retained);
        out.stats[l].deviation = summarize(scores[l].dev);
    });

    for (std::size_t l = 0; l < layers; ++l) {
        const auto& retained = out.per_layer[l].retained;
        LayerKv kept{dump.layers[l].keys.gather(retained), dump.layers[l].values.gather(retained), l};
        std::vector<TokenTag> tags;
        tags.reserve(retained.size());
        for (const std::size_t x : retained) {
            tags.push_back(dump.token_tags[x]);
        }
        result.cache.add_layer(std::move(kept), retained, std::move(tags), n);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Evaluation

QueryMatrix random_queries(std::size_t rows, std::size_t width, std::uint64_t seed) {
    QueryMatrix q;
    q.rows = rows;
    q.width = width;
    q.data.resize(rows * width);
    Rng rng(seed);
    for (auto& v : q.data) {
        v = static_cast<float>(rng.normal());
    }
    return q;
}

std::vector<double> attention_output(std::span<const float> query, const Tensor3& keys, const Tensor3& values,
                                     std::size_t head, std::optional<std::span<const std::size_t>> positions) {
    const std::size_t dim = keys.dim();
    std::vector<std::size_t> all;
    if (!positions) {
        all.resize(keys.seq());
        std::iota(all.begin(), all.end(), std::size_t{0});
        positions = all;
    }
    std::vector<double> out(values.dim(), 0.0);
    if (positions->empty()) {
        return out;
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    std::vector<double> logits(positions->size());
    for (std::size_t j = 0; j < positions->size(); ++j) {
        const auto k = keys.row(head, (*positions)[j]);
        double dot = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
            dot += static_cast<double>(query[d]) * k[d];
        }
        logits[j] = dot * scale;
    }
    const double peak = *std::max_element(logits.begin(), logits.end());
    double norm = 0.0;
    for (auto& z : logits) {
        z = std::exp(z - peak);
        norm += z;
    }
    for (std::size_t j = 0; j < positions->size(); ++j) {
        const double p = logits[j] / norm;
        const auto v = values.row(head, (*positions)[j]);
        for (std::size_t d = 0; d < out.size(); ++d) {
            out[d] += p * v[d];
        }
    }
    return out;
}

Metrics evaluate_plan(const KvDump& dump, const RetentionPlan& plan, const QueryMatrix* queries) {
    validate_dump(dump);
    validate_plan(dump, plan);
    const std::size_t layers = dump.num_layers();
    const std::size_t heads = dump.kv_heads();
    const std::size_t dim = dump.head_dim();
    if (queries != nullptr && queries->width != heads * dim) {
        fail(ErrorCode::shape_mismatch, "query width " + std::to_string(queries->width) + " does not match kv_heads * head_dim = " +
                                            std::to_string(heads * dim));
    }

    Metrics m;
    m.rho_requested = plan.allocation.global_ratio;
    m.policy = plan.config_echo.policy;
    std::size_t kept_positions = 0;
    for (std::size_t l = 0; l < layers; ++l) {
        const LayerKv& layer = dump.layers[l];
        const auto& retained = plan.per_layer[l].retained;
        LayerMetrics lm;
        lm.layer = l;
        lm.quota = retained.size();
        lm.energy_retained = retained_energy_fraction(layer, retained);
        kept_positions += retained.size();
        if (queries != nullptr && queries->rows > 0) {
            double sum = 0.0;
            for (std::size_t q = 0; q < queries->rows; ++q) {
                for (std::size_t h = 0; h < heads; ++h) {
                    const auto qh = queries->row(q).subspan(h * dim, dim);
                    const auto full = attention_output(qh, layer.keys, layer.values, h);
                    const auto kept = attention_output(qh, layer.keys, layer.values, h, retained);
                    double diff = 0.0;
                    double ref = 0.0;
                    for (std::size_t d = 0; d < full.size(); ++d) {
                        diff += (full[d] - kept[d]) * (full[d] - kept[d]);
                        ref += full[d] * full[d];
                    }
                    sum += ref > 0.0 ? std::sqrt(diff / ref) : std::sqrt(diff);
                }
            }
            lm.attention_error = sum / static_cast<double>(queries->rows * heads);
        }
        m.layers.push_back(lm);
    }
    const std::uint64_t row_bytes = 2ULL * heads * dim * bytes_per_element(dump.dtype);
    const std::uint64_t total_positions = static_cast<std::uint64_t>(layers) * dump.seq_len();
    m.bytes_before = row_bytes * total_positions;
    m.bytes_after = row_bytes * kept_positions;
    m.rho_achieved = static_cast<double>(kept_positions) / static_cast<double>(total_positions);
    return m;
}

} // namespace spectrakv
