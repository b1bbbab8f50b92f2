// Copyright 2026 The spectrakv Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "spectrakv/cache.hpp"
#include "spectrakv/error.hpp"
#include "spectrakv/fkv1.hpp"
#include "spectrakv/report.hpp"
#include "spectrakv/synth.hpp"

namespace spectrakv {

namespace {

constexpr const char* kExitCodeHelp =
    "Exit codes:\n"
    "  0  success\n"
    "  1  internal error\n"
    "  2  usage error (unknown, missing or conflicting flags)\n"
    "  3  I/O error (cannot read input or write output)\n"
    "  4  malformed FKV1 input (bad magic, version, size or header)\n"
    "  5  infeasible budget (protected positions exceed a quota or the total)\n"
    "  6  invalid input (out-of-range values, shape mismatch, non-finite data)\n"
    "Failures print one JSON object on stderr: {\"error\", \"exit_code\", \"message\"}.";

int exit_code_for(ErrorCode code) {
    switch (code) {
    case ErrorCode::io_error: return kExitIo;
    case ErrorCode::bad_magic:
    case ErrorCode::version_mismatch:
    case ErrorCode::truncated_payload:
    case ErrorCode::size_mismatch:
    case ErrorCode::malformed_header:
    case ErrorCode::malformed_payload: return kExitFormat;
    case ErrorCode::infeasible_budget: return kExitInfeasible;
    case ErrorCode::invalid_argument:
    case ErrorCode::non_finite:
    case ErrorCode::shape_mismatch: return kExitInvalidInput;
    }
    return kExitInternal;
}

int report_error(std::ostream& err, std::string_view code, int exit_code, std::string_view message) {
    nlohmann::ordered_json j;
    j["error"] = code;
    j["exit_code"] = exit_code;
    j["message"] = message;
    err << j.dump() << '\n';
    return exit_code;
}

/// Flags shared by compress and sweep.
struct PipelineFlags {
    std::string policy = "spectral";
    std::string mode = "dynamic";
    std::string scope = "all";
    std::size_t sink = 4;
    std::size_t recent = 8;
    std::uint64_t seed = 0;
    std::size_t threads = 1;

    void add_to(CLI::App& app) {
        app.add_option("--policy", policy, "Selection policy")
            ->check(CLI::IsMember({"spectral", "recency_sink", "random_seeded", "value_norm"}))
            ->capture_default_str();
        app.add_option("--mode", mode, "Per-layer budget allocation")
            ->check(CLI::IsMember({"dynamic", "uniform"}))
            ->capture_default_str();
        app.add_option("--scope", scope, "Evict from all tokens or only vision tokens")
            ->check(CLI::IsMember({"all", "vision"}))
            ->capture_default_str();
        app.add_option("--sink", sink, "Leading positions never evicted")->capture_default_str();
        app.add_option("--recent", recent, "Trailing positions never evicted")->capture_default_str();
        app.add_option("--seed", seed, "Seed for the random_seeded policy")->capture_default_str();
        app.add_option("--threads", threads, "Worker threads (results do not depend on it)")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
    }

    CompressionConfig config(double rho, double gamma) const {
        CompressionConfig c;
        c.rho = rho;
        c.gamma = gamma;
        c.sink_count = sink;
        c.recent_count = recent;
        c.allocation_mode = parse_allocation_mode(mode);
        c.eviction_scope = parse_eviction_scope(scope);
        c.policy = parse_policy(policy);
        c.seed = seed;
        c.threads = threads;
        return c;
    }
};

struct QueryFlags {
    std::string path;
    std::size_t count = 16;
    std::uint64_t seed = 0;

    void add_to(CLI::App& app, std::size_t default_count) {
        count = default_count;
        auto* file = app.add_option("--queries", path, "CSV of query rows, kv_heads*head_dim values each");
        auto* n = app.add_option("--query-count", count, "Random Gaussian queries when --queries is absent (0 = none)")
                      ->capture_default_str();
        auto* s = app.add_option("--query-seed", seed, "Seed for random queries")->capture_default_str();
        file->excludes(n)->excludes(s);
    }

    std::optional<QueryMatrix> load(const KvDump& dump) const {
        const std::size_t width = dump.kv_heads() * dump.head_dim();
        if (!path.empty()) {
            return parse_queries_csv(read_text_file(path), width);
        }
        if (count == 0) {
            return std::nullopt;
        }
        return random_queries(count, width, seed);
    }
};

double mean_of(const std::vector<LayerMetrics>& layers, auto field) {
    double acc = 0.0;
    for (const auto& m : layers) {
        acc += field(m);
    }
    return layers.empty() ? 0.0 : acc / static_cast<double>(layers.size());
}

double mean_recall(const SynthTruth& truth, const RetentionPlan& plan) {
    if (truth.planted.size() != plan.per_layer.size()) {
        fail(ErrorCode::shape_mismatch, "truth has " + std::to_string(truth.planted.size()) +
                                            " layers, dump has " + std::to_string(plan.per_layer.size()));
    }
    double acc = 0.0;
    for (std::size_t l = 0; l < plan.per_layer.size(); ++l) {
        acc += planted_recall(truth.planted[l], plan.per_layer[l].retained);
    }
    return acc / static_cast<double>(plan.per_layer.size());
}

void run_compress(const std::string& input, double rho, double gamma, const PipelineFlags& flags,
                  const QueryFlags& queries, const std::string& plan_path, const std::string& metrics_path,
                  const std::string& compressed_path) {
    const KvDump dump = read_dump(input);
    const CompressionConfig config = flags.config(rho, gamma);

    const auto start = std::chrono::steady_clock::now();
    CompressionResult result = compress(dump, config);
    const auto stop = std::chrono::steady_clock::now();

    const std::optional<QueryMatrix> q = queries.load(dump);
    Metrics metrics = evaluate_plan(dump, result.plan, q ? &*q : nullptr);
    metrics.method_latency_ms = std::chrono::duration<double, std::milli>(stop - start).count();

    write_text_file(plan_path, plan_to_json(result.plan));
    write_text_file(metrics_path, metrics_to_json(metrics));
    if (!compressed_path.empty()) {
        write_compressed(result.cache, dump.dtype, compressed_path);
    }
}

void run_spectrum(const std::string& input, const std::string& out, std::optional<std::size_t> layer, bool per_head,
                  std::size_t threads) {
    const KvDump dump = read_dump(input);
    write_text_file(out, spectrum_csv(spectrum_rows(dump, layer, per_head, threads)));
}

void run_synth(const std::string& spec_path, const std::string& out, const std::string& truth_path,
               std::optional<std::uint64_t> seed) {
    SynthSpec spec = synth_spec_from_json(read_text_file(spec_path));
    if (seed) {
        spec.seed = *seed;
    }
    const SynthOutput generated = generate(spec);
    write_dump(generated.dump, out);
    write_text_file(truth_path, truth_to_json(generated.truth));
}

void run_eval(const std::string& input, const std::string& plan_path, const QueryFlags& queries,
              const std::string& metrics_path) {
    const KvDump dump = read_dump(input);
    const RetentionPlan plan = plan_from_json(read_text_file(plan_path));
    const std::optional<QueryMatrix> q = queries.load(dump);
    const Metrics metrics = evaluate_plan(dump, plan, q ? &*q : nullptr);
    write_text_file(metrics_path, metrics_to_json(metrics));
}

void run_sweep(const std::string& input, const std::vector<double>& gammas, const std::vector<double>& rhos,
               double rho, double gamma, const PipelineFlags& flags, const QueryFlags& queries,
               const std::string& truth_path, const std::string& out) {
    const KvDump dump = read_dump(input);
    const std::optional<QueryMatrix> q = queries.load(dump);
    std::optional<SynthTruth> truth;
    if (!truth_path.empty()) {
        truth = truth_from_json(read_text_file(truth_path));
    }

    const bool sweep_gamma = !gammas.empty();
    const std::vector<double>& values = sweep_gamma ? gammas : rhos;

    std::string csv = "sweep,value,gamma,rho,policy,mode,total_budget,rho_achieved,bytes_before,bytes_after,"
                      "mean_energy_retained,mean_attention_error,planted_recall\n";
    for (const double value : values) {
        const CompressionConfig config = flags.config(sweep_gamma ? rho : value, sweep_gamma ? value : gamma);
        const CompressionResult result = compress(dump, config);
        const Metrics m = evaluate_plan(dump, result.plan, q ? &*q : nullptr);

        std::ostringstream row;
        row << (sweep_gamma ? "gamma" : "rho") << ',' << format_double(value) << ',' << format_double(config.gamma)
            << ',' << format_double(config.rho) << ',' << to_string(config.policy) << ','
            << to_string(config.allocation_mode) << ',' << result.plan.allocation.total_budget << ','
            << format_double(m.rho_achieved) << ',' << m.bytes_before << ',' << m.bytes_after << ','
            << format_double(mean_of(m.layers, [](const LayerMetrics& l) { return l.energy_retained; })) << ',';
        if (q) {
            row << format_double(mean_of(m.layers, [](const LayerMetrics& l) { return l.attention_error.value(); }));
        }
        row << ',';
        if (truth) {
            row << format_double(mean_recall(*truth, result.plan));
        }
        csv += row.str() + '\n';
    }
    write_text_file(out, csv);
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Spectral KV-cache compression: plan, inspect and evaluate cache eviction on FKV1 dumps",
                 "spectrakv"};
    app.footer(kExitCodeHelp);
    app.require_subcommand(1);

    // compress
    auto* compress_cmd = app.add_subcommand("compress", "Build a retention plan and optionally the compressed cache");
    std::string c_input, c_plan, c_metrics, c_compressed;
    double c_rho = 0.2;
    double c_gamma = 0.2;
    PipelineFlags c_flags;
    QueryFlags c_queries;
    compress_cmd->add_option("--input", c_input, "FKV1 dump")->required();
    compress_cmd->add_option("--rho", c_rho, "Fraction of positions to retain, in (0, 1]")->required();
    compress_cmd->add_option("--gamma", c_gamma, "Low-pass cutoff factor, in [0, 1]")->capture_default_str();
    c_flags.add_to(*compress_cmd);
    c_queries.add_to(*compress_cmd, 0);
    compress_cmd->add_option("--plan", c_plan, "Output plan JSON")->required();
    compress_cmd->add_option("--metrics", c_metrics, "Output metrics JSON")->required();
    compress_cmd->add_option("--compressed", c_compressed, "Output compressed cache (one FKV1 record per layer)");

    // spectrum
    auto* spectrum_cmd = app.add_subcommand("spectrum", "Per-frequency DCT power of K and V along the sequence axis");
    std::string s_input, s_out;
    std::optional<std::size_t> s_layer;
    bool s_per_head = false;
    std::size_t s_threads = 1;
    spectrum_cmd->add_option("--input", s_input, "FKV1 dump")->required();
    spectrum_cmd->add_option("--out", s_out, "Output CSV")->required();
    spectrum_cmd->add_option("--layer", s_layer, "Only this layer");
    spectrum_cmd->add_flag("--per-head", s_per_head, "Also emit one block of rows per head");
    spectrum_cmd->add_option("--threads", s_threads, "Worker threads")->check(CLI::PositiveNumber);

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dump with planted outliers");
    std::string y_spec, y_out, y_truth;
    std::optional<std::uint64_t> y_seed;
    synth_cmd->add_option("--spec", y_spec, "Synth spec JSON")->required();
    synth_cmd->add_option("--out", y_out, "Output FKV1 dump")->required();
    synth_cmd->add_option("--truth", y_truth, "Output truth JSON (planted positions)")->required();
    synth_cmd->add_option("--seed", y_seed, "Override the seed from the --spec file");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Score a plan against its dump");
    std::string e_input, e_plan, e_metrics;
    QueryFlags e_queries;
    eval_cmd->add_option("--input", e_input, "FKV1 dump")->required();
    eval_cmd->add_option("--plan", e_plan, "Plan JSON")->required();
    e_queries.add_to(*eval_cmd, 16);
    eval_cmd->add_option("--metrics", e_metrics, "Output metrics JSON")->required();

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "Compress and evaluate over a list of gamma or rho values");
    std::string w_input, w_out, w_truth;
    std::vector<double> w_gammas, w_rhos;
    double w_rho = 0.2;
    double w_gamma = 0.2;
    PipelineFlags w_flags;
    QueryFlags w_queries;
    sweep_cmd->add_option("--input", w_input, "FKV1 dump")->required();
    auto* gl = sweep_cmd->add_option("--gamma-list", w_gammas, "Comma-separated gamma values")->delimiter(',');
    auto* rl = sweep_cmd->add_option("--rho-list", w_rhos, "Comma-separated rho values")->delimiter(',');
    gl->excludes(rl);
    auto* fixed_rho = sweep_cmd->add_option("--rho", w_rho, "Fixed rho for a gamma sweep")->capture_default_str();
    auto* fixed_gamma =
        sweep_cmd->add_option("--gamma", w_gamma, "Fixed gamma for a rho sweep")->capture_default_str();
    rl->excludes(fixed_rho);
    gl->excludes(fixed_gamma);
    w_flags.add_to(*sweep_cmd);
    w_queries.add_to(*sweep_cmd, 16);
    sweep_cmd->add_option("--truth", w_truth, "Truth JSON; adds a planted-recall column");
    sweep_cmd->add_option("--out", w_out, "Output CSV")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
        if (sweep_cmd->parsed() && w_gammas.empty() && w_rhos.empty()) {
            throw CLI::RequiredError("one of --gamma-list or --rho-list");
        }
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        return report_error(err, "usage", kExitUsage, e.what());
    }

    try {
        if (compress_cmd->parsed()) {
            run_compress(c_input, c_rho, c_gamma, c_flags, c_queries, c_plan, c_metrics, c_compressed);
        } else if (spectrum_cmd->parsed()) {
            run_spectrum(s_input, s_out, s_layer, s_per_head, s_threads);
        } else if (synth_cmd->parsed()) {
            run_synth(y_spec, y_out, y_truth, y_seed);
        } else if (eval_cmd->parsed()) {
            run_eval(e_input, e_plan, e_queries, e_metrics);
        } else if (sweep_cmd->parsed()) {
            run_sweep(w_input, w_gammas, w_rhos, w_rho, w_gamma, w_flags, w_queries, w_truth, w_out);
        }
    } catch (const Error& e) {
        return report_error(err, to_string(e.code()), exit_code_for(e.code()), e.what());
    } catch (const std::exception& e) {
        return report_error(err, "internal", kExitInternal, e.what());
    }
    return kExitOk;
}

int cli_main(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) {
        args.emplace_back(argv[i]);
    }
    return run_cli(args, std::cout, std::cerr);
}

} // namespace spectrakv
