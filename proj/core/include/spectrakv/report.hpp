// Copyright 2026 The spectrakv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spectrakv/cache.hpp"
#include "spectrakv/synth.hpp"

namespace spectrakv {

/*
 * Plan JSON:
 *   {"format": "spectrakv.plan", "version": 1,
 *    "geometry": {"num_layers", "kv_heads", "head_dim", "seq_len", "dtype"},
 *    "config": {"rho", "gamma", "sink", "recent", "mode", "scope", "policy", "seed"},
 *    "allocation": {"total_budget", "global_ratio", "quotas": [...]},
 *    "layers": [{"layer", "quota", "energy_ratio": {"r_k", "r_v", "r"},
 *                "energy_retained", "deviation": {"min", "max", "mean"},
 *                "forced": [...], "retained": [...]}]}
 *
 * The thread count is deliberately not echoed so the plan is identical for
 * any degree of parallelism.
 */
std::string plan_to_json(const RetentionPlan& plan);
RetentionPlan plan_from_json(std::string_view text);

/*
 * Metrics JSON:
 *   {"format": "spectrakv.metrics", "version": 1, "policy",
 *    "rho_requested", "rho_achieved", "bytes_before", "bytes_after",
 *    "method_latency_ms" (number or null),
 *    "layers": [{"layer", "quota", "energy_retained", "attention_error" (number or null)}]}
 */
std::string metrics_to_json(const Metrics& metrics);

/// Every SynthSpec field is an optional key; unknown keys are rejected.
SynthSpec synth_spec_from_json(std::string_view text);
std::string synth_spec_to_json(const SynthSpec& spec);

/// {"format": "spectrakv.truth", "version": 1, "outliers_per_layer", "planted": [[...], ...]}
std::string truth_to_json(const SynthTruth& truth);
SynthTruth truth_from_json(std::string_view text);

/// One row of the power spectrum table; `head` is empty for the all-heads aggregate.
struct SpectrumRow {
    std::size_t layer = 0;
    std::optional<std::size_t> head;
    std::size_t bin = 0;
    double key_power = 0.0;   // mean over (head, channel) of squared K coefficients
    double value_power = 0.0; // same for V
    double mean_power = 0.0;  // (key_power + value_power) / 2
    double total_power = 0.0; // sum of squared K and V coefficients; bins sum to the layer energy
};

std::vector<SpectrumRow> spectrum_rows(const KvDump& dump, std::optional<std::size_t> layer, bool per_head,
                                       std::size_t threads = 1);

/// Header `layer,head,bin,key_power,value_power,mean_power,total_power`; head is "all" for aggregates.
std::string spectrum_csv(const std::vector<SpectrumRow>& rows);

/// Comma-separated rows of `width` floats; blank lines and lines starting with '#' are skipped.
QueryMatrix parse_queries_csv(std::string_view text, std::size_t width);

/// Shortest round-trip decimal form.
std::string format_double(double value);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

} // namespace spectrakv
