// Copyright 2026 The spectrakv Authors
// SPDX-License-Identifier: Apache-2.0

#include "spectrakv/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <system_error>

#include <json.hpp>

#include "parallel.hpp"
#include "spectrakv/error.hpp"
#include "spectrakv/fkv1.hpp"
#include "spectrakv/spectral.hpp"

namespace spectrakv {

namespace {

using Json = nlohmann::ordered_json;

constexpr int kSchemaVersion = 1;

Json parse_json(std::string_view text, std::string_view what) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        fail(ErrorCode::invalid_argument, std::string(what) + ": " + e.what());
    }
}

const Json& require(const Json& obj, const char* key, std::string_view what) {
    if (!obj.is_object() || !obj.contains(key)) {
        fail(ErrorCode::invalid_argument, std::string(what) + ": missing key '" + key + "'");
    }
    return obj.at(key);
}

template <typename T>
struct is_index_list : std::false_type {};
template <>
struct is_index_list<std::vector<std::size_t>> : std::true_type {};
template <>
struct is_index_list<std::vector<std::vector<std::size_t>>> : std::true_type {};

bool all_unsigned(const Json& v) {
    if (v.is_array()) {
        return std::all_of(v.begin(), v.end(), [](const Json& e) { return all_unsigned(e); });
    }
    return v.is_number_unsigned();
}

template <typename T>
T get_as(const Json& obj, const char* key, std::string_view what) {
    const Json& v = require(obj, key, what);
    try {
        if constexpr (std::is_unsigned_v<T>) {
            if (!v.is_number_unsigned()) {
                throw Json::type_error::create(302, "expected a non-negative integer", &v);
            }
        }
        if constexpr (is_index_list<T>::value) {
            if (!v.is_array() || !all_unsigned(v)) {
                throw Json::type_error::create(302, "expected an array of non-negative integers", &v);
            }
        }
        return v.get<T>();
    } catch (const Json::exception& e) {
        fail(ErrorCode::invalid_argument, std::string(what) + ": key '" + key + "': " + e.what());
    }
}

void check_format(const Json& root, std::string_view format, std::string_view what) {
    if (get_as<std::string>(root, "format", what) != format) {
        fail(ErrorCode::invalid_argument, std::string(what) + ": expected format '" + std::string(format) + "'");
    }
    if (get_as<int>(root, "version", what) != kSchemaVersion) {
        fail(ErrorCode::invalid_argument, std::string(what) + ": unsupported schema version");
    }
}

Json optional_number(const std::optional<double>& v) {
    return v ? Json(*v) : Json(nullptr);
}

std::string_view dtype_name(DType dtype) {
    return dtype == DType::f16 ? "f16" : "f32";
}

DType parse_dtype(std::string_view text) {
    if (text == "f32") {
        return DType::f32;
    }
    if (text == "f16") {
        return DType::f16;
    }
    fail(ErrorCode::invalid_argument, "unknown dtype '" + std::string(text) + "' (expected f32 or f16)");
}

} // namespace

std::string format_double(double value) {
    char buf[64];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc()) {
        fail(ErrorCode::invalid_argument, "cannot format number");
    }
    return std::string(buf, end);
}

std::string plan_to_json(const RetentionPlan& plan) {
    const CompressionConfig& c = plan.config_echo;
    Json root;
    root["format"] = "spectrakv.plan";
    root["version"] = kSchemaVersion;
    root["geometry"] = {{"num_layers", plan.num_layers},
                        {"kv_heads", plan.kv_heads},
                        {"head_dim", plan.head_dim},
                        {"seq_len", plan.seq_len},
                        {"dtype", dtype_name(plan.dtype)}};
    root["config"] = {{"rho", c.rho},
                      {"gamma", c.gamma},
                      {"sink", c.sink_count},
                      {"recent", c.recent_count},
                      {"mode", to_string(c.allocation_mode)},
                      {"scope", to_string(c.eviction_scope)},
                      {"policy", to_string(c.policy)},
                      {"seed", c.seed}};
    root["allocation"] = {{"total_budget", plan.allocation.total_budget},
                          {"global_ratio", plan.allocation.global_ratio},
                          {"quotas", plan.allocation.quotas}};
    Json layers = Json::array();
    for (std::size_t l = 0; l < plan.per_layer.size(); ++l) {
        const SelectionResult& sel = plan.per_layer[l];
        Json layer;
        layer["layer"] = l;
        layer["quota"] = sel.budget;
        if (l < plan.stats.size()) {
            const LayerPlanStats& s = plan.stats[l];
            layer["energy_ratio"] = {{"r_k", s.energy_ratio.r_k}, {"r_v", s.energy_ratio.r_v}, {"r", s.energy_ratio.r}};
            layer["energy_retained"] = s.energy_retained;
            layer["deviation"] = {{"min", s.deviation.min}, {"max", s.deviation.max}, {"mean", s.deviation.mean}};
        }
        layer["forced"] = sel.forced;
        layer["retained"] = sel.retained;
        layers.push_back(std::move(layer));
    }
    root["layers"] = std::move(layers);
    return root.dump(2) + "\n";
}

RetentionPlan plan_from_json(std::string_view text) {
    constexpr std::string_view what = "plan JSON";
    const Json root = parse_json(text, what);
    check_format(root, "spectrakv.plan", what);

    RetentionPlan plan;
    const Json& g = require(root, "geometry", what);
    plan.num_layers = get_as<std::size_t>(g, "num_layers", what);
    plan.kv_heads = get_as<std::size_t>(g, "kv_heads", what);
    plan.head_dim = get_as<std::size_t>(g, "head_dim", what);
    plan.seq_len = get_as<std::size_t>(g, "seq_len", what);
    plan.dtype = parse_dtype(get_as<std::string>(g, "dtype", what));

    const Json& c = require(root, "config", what);
    CompressionConfig& cfg = plan.config_echo;
    cfg.rho = get_as<double>(c, "rho", what);
    cfg.gamma = get_as<double>(c, "gamma", what);
    cfg.sink_count = get_as<std::size_t>(c, "sink", what);
    cfg.recent_count = get_as<std::size_t>(c, "recent", what);
    cfg.allocation_mode = parse_allocation_mode(get_as<std::string>(c, "mode", what));
    cfg.eviction_scope = parse_eviction_scope(get_as<std::string>(c, "scope", what));
    cfg.policy = parse_policy(get_as<std::string>(c, "policy", what));
    cfg.seed = get_as<std::uint64_t>(c, "seed", what);

    const Json& a = require(root, "allocation", what);
    plan.allocation.total_budget = get_as<std::size_t>(a, "total_budget", what);
    plan.allocation.global_ratio = get_as<double>(a, "global_ratio", what);
    plan.allocation.quotas = get_as<std::vector<std::size_t>>(a, "quotas", what);
    plan.allocation.mode = cfg.allocation_mode;

    const Json& layers = require(root, "layers", what);
    if (!layers.is_array()) {
        fail(ErrorCode::invalid_argument, "plan JSON: 'layers' must be an array");
    }
    for (const Json& layer : layers) {
        SelectionResult sel;
        sel.budget = get_as<std::size_t>(layer, "quota", what);
        sel.retained = get_as<std::vector<std::size_t>>(layer, "retained", what);
        sel.forced = get_as<std::vector<std::size_t>>(layer, "forced", what);
        LayerPlanStats stats;
        if (layer.contains("energy_ratio")) {
            const Json& r = layer.at("energy_ratio");
            stats.energy_ratio.r_k = get_as<double>(r, "r_k", what);
            stats.energy_ratio.r_v = get_as<double>(r, "r_v", what);
            stats.energy_ratio.r = get_as<double>(r, "r", what);
        }
        stats.energy_ratio.layer_index = plan.per_layer.size();
        if (layer.contains("energy_retained")) {
            stats.energy_retained = get_as<double>(layer, "energy_retained", what);
        }
        if (layer.contains("deviation")) {
            const Json& d = layer.at("deviation");
            stats.deviation = {get_as<double>(d, "min", what), get_as<double>(d, "max", what),
                               get_as<double>(d, "mean", what)};
        }
        plan.per_layer.push_back(std::move(sel));
        plan.stats.push_back(stats);
    }
    return plan;
}

std::string metrics_to_json(const Metrics& metrics) {
    Json root;
    root["format"] = "spectrakv.metrics";
    root["version"] = kSchemaVersion;
    root["policy"] = to_string(metrics.policy);
    root["rho_requested"] = metrics.rho_requested;
    root["rho_achieved"] = metrics.rho_achieved;
    root["bytes_before"] = metrics.bytes_before;
    root["bytes_after"] = metrics.bytes_after;
    root["method_latency_ms"] = optional_number(metrics.method_latency_ms);
    Json layers = Json::array();
    for (const LayerMetrics& m : metrics.layers) {
        layers.push_back({{"layer", m.layer},
                          {"quota", m.quota},
                          {"energy_retained", m.energy_retained},
                          {"attention_error", optional_number(m.attention_error)}});
    }
    root["layers"] = std::move(layers);
    return root.dump(2) + "\n";
}

SynthSpec synth_spec_from_json(std::string_view text) {
    constexpr std::string_view what = "synth spec JSON";
    const Json root = parse_json(text, what);
    if (!root.is_object()) {
        fail(ErrorCode::invalid_argument, "synth spec JSON: expected an object");
    }
    static const std::set<std::string> known = {
        "num_layers",         "kv_heads",         "head_dim",   "seq_len",
        "base_modes",         "base_amplitude",   "outliers_per_layer",
        "outlier_amplitude",  "noise_sigma",      "spike_channel_fraction",
        "seed",               "layer_noise_sigmas", "text_prefix", "text_suffix",
        "dtype"};
    for (const auto& item : root.items()) {
        if (!known.contains(item.key())) {
            fail(ErrorCode::invalid_argument, "synth spec JSON: unknown key '" + item.key() + "'");
        }
    }
    SynthSpec s;
    const auto opt = [&]<typename T>(const char* key, T& field) {
        if (root.contains(key)) {
            field = get_as<T>(root, key, what);
        }
    };
    opt("num_layers", s.num_layers);
    opt("kv_heads", s.kv_heads);
    opt("head_dim", s.head_dim);
    opt("seq_len", s.seq_len);
    opt("base_modes", s.base_modes);
    opt("base_amplitude", s.base_amplitude);
    opt("outliers_per_layer", s.outliers_per_layer);
    opt("outlier_amplitude", s.outlier_amplitude);
    opt("noise_sigma", s.noise_sigma);
    opt("spike_channel_fraction", s.spike_channel_fraction);
    opt("seed", s.seed);
    opt("layer_noise_sigmas", s.layer_noise_sigmas);
    opt("text_prefix", s.text_prefix);
    opt("text_suffix", s.text_suffix);
    if (root.contains("dtype")) {
        s.dtype = parse_dtype(get_as<std::string>(root, "dtype", what));
    }
    validate_synth_spec(s);
    return s;
}

std::string synth_spec_to_json(const SynthSpec& s) {
    Json root = {{"num_layers", s.num_layers},
                 {"kv_heads", s.kv_heads},
                 {"head_dim", s.head_dim},
                 {"seq_len", s.seq_len},
                 {"base_modes", s.base_modes},
                 {"base_amplitude", s.base_amplitude},
                 {"outliers_per_layer", s.outliers_per_layer},
                 {"outlier_amplitude", s.outlier_amplitude},
                 {"noise_sigma", s.noise_sigma},
                 {"spike_channel_fraction", s.spike_channel_fraction},
                 {"seed", s.seed},
                 {"layer_noise_sigmas", s.layer_noise_sigmas},
                 {"text_prefix", s.text_prefix},
                 {"text_suffix", s.text_suffix},
                 {"dtype", dtype_name(s.dtype)}};
    return root.dump(2) + "\n";
}

std::string truth_to_json(const SynthTruth& truth) {
    Json root;
    root["format"] = "spectrakv.truth";
    root["version"] = kSchemaVersion;
    root["outliers_per_layer"] = truth.planted.empty() ? 0 : truth.planted.front().size();
    root["planted"] = truth.planted;
    return root.dump(2) + "\n";
}

SynthTruth truth_from_json(std::string_view text) {
    constexpr std::string_view what = "truth JSON";
    const Json root = parse_json(text, what);
    check_format(root, "spectrakv.truth", what);
    SynthTruth truth;
    truth.planted = get_as<std::vector<std::vector<std::size_t>>>(root, "planted", what);
    return truth;
}

std::vector<SpectrumRow> spectrum_rows(const KvDump& dump, std::optional<std::size_t> layer, bool per_head,
                                       std::size_t threads) {
    validate_dump(dump);
    if (layer && *layer >= dump.num_layers()) {
        fail(ErrorCode::invalid_argument, "layer " + std::to_string(*layer) + " out of range (dump has " +
                                              std::to_string(dump.num_layers()) + " layers)");
    }
    std::vector<std::size_t> selected;
    if (layer) {
        selected.push_back(*layer);
    } else {
        for (std::size_t l = 0; l < dump.num_layers(); ++l) {
            selected.push_back(l);
        }
    }

    const std::size_t heads = dump.kv_heads();
    const std::size_t dim = dump.head_dim();
    const std::size_t n = dump.seq_len();
    const DctPlan plan(n);
    std::vector<std::vector<SpectrumRow>> per_layer(selected.size());

    detail::parallel_for(selected.size(), threads, [&](std::size_t i) {
        const std::size_t l = selected[i];
        const LayerSpectrum spec = compute_layer_spectrum(dump.layers[l], plan);
        auto& out = per_layer[i];

        const auto emit = [&](std::optional<std::size_t> head, std::size_t h_begin, std::size_t h_end) {
            const double columns = static_cast<double>((h_end - h_begin) * dim);
            for (std::size_t m = 0; m < n; ++m) {
                double sk = 0.0;
                double sv = 0.0;
                for (std::size_t h = h_begin; h < h_end; ++h) {
                    for (std::size_t d = 0; d < dim; ++d) {
                        const double ck = spec.keys[spec.offset(h, m, d)];
                        const double cv = spec.values[spec.offset(h, m, d)];
                        sk += ck * ck;
                        sv += cv * cv;
                    }
                }
                SpectrumRow row;
                row.layer = l;
                row.head = head;
                row.bin = m;
                row.key_power = sk / columns;
                row.value_power = sv / columns;
                row.mean_power = 0.5 * (row.key_power + row.value_power);
                row.total_power = sk + sv;
                out.push_back(row);
            }
        };

        emit(std::nullopt, 0, heads);
        if (per_head) {
            for (std::size_t h = 0; h < heads; ++h) {
                emit(h, h, h + 1);
            }
        }
    });

    std::vector<SpectrumRow> rows;
    for (auto& chunk : per_layer) {
        rows.insert(rows.end(), chunk.begin(), chunk.end());
    }
    return rows;
}

std::string spectrum_csv(const std::vector<SpectrumRow>& rows) {
    std::string out = "layer,head,bin,key_power,value_power,mean_power,total_power\n";
    for (const SpectrumRow& r : rows) {
        out += std::to_string(r.layer);
        out += ',';
        out += r.head ? std::to_string(*r.head) : std::string("all");
        out += ',';
        out += std::to_string(r.bin);
        for (const double v : {r.key_power, r.value_power, r.mean_power, r.total_power}) {
            out += ',';
            out += format_double(v);
        }
        out += '\n';
    }
    return out;
}

QueryMatrix parse_queries_csv(std::string_view text, std::size_t width) {
    QueryMatrix q;
    q.width = width;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t eol = std::min(text.find('\n', pos), text.size());
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) {
            line.remove_suffix(1);
        }
        while (!line.empty() && (line.front() == ' ' || line.front() == '\t')) {
            line.remove_prefix(1);
        }
        if (line.empty() || line.front() == '#') {
            continue;
        }
        std::size_t fields = 0;
        std::size_t start = 0;
        while (start <= line.size()) {
            const std::size_t comma = std::min(line.find(',', start), line.size());
            std::string_view field = line.substr(start, comma - start);
            while (!field.empty() && field.front() == ' ') {
                field.remove_prefix(1);
            }
            while (!field.empty() && field.back() == ' ') {
                field.remove_suffix(1);
            }
            float value = 0.0f;
            const auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
            if (ec != std::errc() || end != field.data() + field.size() || field.empty()) {
                fail(ErrorCode::invalid_argument, "queries line " + std::to_string(line_no) + ": bad number '" +
                                                      std::string(field) + "'");
            }
            if (!std::isfinite(value)) {
                fail(ErrorCode::non_finite, "queries line " + std::to_string(line_no) + ": non-finite value");
            }
            q.data.push_back(value);
            ++fields;
            start = comma + 1;
        }
        if (fields != width) {
            fail(ErrorCode::shape_mismatch, "queries line " + std::to_string(line_no) + ": expected " +
                                                std::to_string(width) + " values, got " + std::to_string(fields));
        }
        ++q.rows;
    }
    if (q.rows == 0) {
        fail(ErrorCode::invalid_argument, "queries file has no rows");
    }
    return q;
}

std::string read_text_file(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return std::string(bytes.begin(), bytes.end());
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    write_file(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

} // namespace spectrakv
