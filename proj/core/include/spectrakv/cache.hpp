// Copyright 2026 The spectrakv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "spectrakv/baselines.hpp"
#include "spectrakv/budget.hpp"
#include "spectrakv/outlier.hpp"
#include "spectrakv/tensor.hpp"

namespace spectrakv {

/// Post-prefill cache of every layer plus per-token modality tags.
struct KvDump {
    std::vector<LayerKv> layers;
    std::vector<TokenTag> token_tags;
    DType dtype = DType::f32;

    std::size_t num_layers() const noexcept { return layers.size(); }
    std::size_t kv_heads() const noexcept { return layers.empty() ? 0 : layers.front().heads(); }
    std::size_t head_dim() const noexcept { return layers.empty() ? 0 : layers.front().dim(); }
    std::size_t seq_len() const noexcept { return layers.empty() ? 0 : layers.front().seq(); }

    friend bool operator==(const KvDump&, const KvDump&) = default;
};

/// Geometry, tag length, layer indices and finiteness.
void validate_dump(const KvDump& dump);

enum class EvictionScope { all_tokens, vision_only };

std::string_view to_string(EvictionScope scope) noexcept;
EvictionScope parse_eviction_scope(std::string_view text);

struct CompressionConfig {
    double rho = 0.2;
    double gamma = 0.2;
    std::size_t sink_count = 4;
    std::size_t recent_count = 8;
    AllocationMode allocation_mode = AllocationMode::dynamic;
    EvictionScope eviction_scope = EvictionScope::all_tokens;
    PolicyId policy = PolicyId::spectral;
    std::uint64_t seed = 0;
    /// Worker threads for the per-layer stages; results do not depend on it.
    std::size_t threads = 1;
};

void validate_config(const CompressionConfig& config);

/// Sink and recent positions, plus every text position in vision_only scope.
std::vector<std::size_t> protected_positions(const CompressionConfig& config, std::span<const TokenTag> tags);

struct DeviationSummary {
    double min = 0.0;
    double max = 0.0;
    double mean = 0.0;
};

struct LayerPlanStats {
    LayerEnergyRatio energy_ratio;
    double energy_retained = 1.0;
    DeviationSummary deviation;
};

struct RetentionPlan {
    std::vector<SelectionResult> per_layer;
    BudgetAllocation allocation;
    CompressionConfig config_echo;
    std::vector<LayerPlanStats> stats;
    // geometry of the source dump
    std::size_t num_layers = 0;
    std::size_t kv_heads = 0;
    std::size_t head_dim = 0;
    std::size_t seq_len = 0;
    DType dtype = DType::f32;
};

/// Throws invalid_argument unless the plan's geometry and selections fit the dump.
void validate_plan(const KvDump& dump, const RetentionPlan& plan);

/// Retained rows per layer; layers may differ in length.
class CompressedCache {
public:
    CompressedCache() = default;

    std::size_t num_layers() const noexcept { return m_layers.size(); }
    const LayerKv& layer(std::size_t l) const { return m_layers.at(l); }
    std::span<const std::size_t> position_map(std::size_t l) const { return m_position_maps.at(l); }
    std::span<const TokenTag> token_tags(std::size_t l) const { return m_token_tags.at(l); }

    void add_layer(LayerKv layer, std::vector<std::size_t> positions, std::vector<TokenTag> tags,
                   std::size_t next_position);

    /// Decode-time append of one position; new_k/new_v are [heads, 1, dim].
    /// The new row takes the next unused position and is never evicted.
    void append(std::size_t layer_index, const Tensor3& new_k, const Tensor3& new_v,
                TokenTag tag = TokenTag::text);

private:
    std::vector<LayerKv> m_layers;
    std::vector<std::vector<std::size_t>> m_position_maps;
    std::vector<std::vector<TokenTag>> m_token_tags;
    std::vector<std::size_t> m_next_position;
};

struct CompressionResult {
    RetentionPlan plan;
    CompressedCache cache;
};

CompressionResult compress(const KvDump& dump, const CompressionConfig& config);

/// Fraction of squared K/V row norms kept by `retained`; 1 for an all-zero layer.
double retained_energy_fraction(const LayerKv& layer, std::span<const std::size_t> retained);

/// Query rows of width kv_heads * head_dim.
struct QueryMatrix {
    std::size_t rows = 0;
    std::size_t width = 0;
    std::vector<float> data;

    std::span<const float> row(std::size_t i) const { return std::span<const float>(data).subspan(i * width, width); }
};

QueryMatrix random_queries(std::size_t rows, std::size_t width, std::uint64_t seed);

struct LayerMetrics {
    std::size_t layer = 0;
    std::size_t quota = 0;
    double energy_retained = 1.0;
    std::optional<double> attention_error;
};

struct Metrics {
    std::vector<LayerMetrics> layers;
    double rho_requested = 1.0;
    double rho_achieved = 1.0;
    std::uint64_t bytes_before = 0;
    std::uint64_t bytes_after = 0;
    std::optional<double> method_latency_ms;
    PolicyId policy = PolicyId::spectral;
};

/**
 * Scores a plan against the full dump: retained energy per layer, memory
 * before/after, and, when queries are given, the mean relative L2 error of
 * single-query softmax attention (logits scaled by 1/sqrt(head_dim)) over
 * queries and heads.
 */
Metrics evaluate_plan(const KvDump& dump, const RetentionPlan& plan, const QueryMatrix* queries = nullptr);

/// softmax(q k^T / sqrt(dim)) v for one head, over every position or only the
/// listed ones. `query` is that head's [dim] slice. An empty subset yields zeros.
std::vector<double> attention_output(std::span<const float> query, const Tensor3& keys, const Tensor3& values,
                                     std::size_t head,
                                     std::optional<std::span<const std::size_t>> positions = std::nullopt);

} // namespace spectrakv
