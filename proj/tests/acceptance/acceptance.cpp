// Copyright 2026 The spectrakv Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "spectrakv/budget.hpp"
#include "spectrakv/cache.hpp"
#include "spectrakv/fkv1.hpp"
#include "spectrakv/report.hpp"
#include "spectrakv/spectral.hpp"
#include "spectrakv/synth.hpp"
#include "support.hpp"

namespace spectrakv {
namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* pattern, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), pattern, args...);
    return buf;
}

int cli(const std::vector<std::string>& args) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = run_cli(args, out, err);
    if (code != 0) {
        std::fprintf(stderr, "cli failed: %s\n", err.str().c_str());
    }
    return code;
}

// 1. Orthonormality, round trip, Parseval, fast path vs naive.
Outcome spectral_correctness() {
    const auto start = Clock::now();
    std::mt19937_64 rng(1);
    std::normal_distribution<double> normal;

    double ortho = 0.0;
    for (std::size_t n = 1; n <= 64; ++n) {
        const DctPlan plan(n);
        std::vector<double> g(n * n); // column i = transform of unit vector e_i
        std::vector<double> e(n, 0.0);
        std::vector<double> c(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::fill(e.begin(), e.end(), 0.0);
            e[i] = 1.0;
            plan.forward(e, c);
            for (std::size_t m = 0; m < n; ++m) {
                g[m * n + i] = c[m];
            }
        }
        for (std::size_t a = 0; a < n; ++a) {
            for (std::size_t b = 0; b < n; ++b) {
                double dot = 0.0;
                for (std::size_t m = 0; m < n; ++m) {
                    dot += g[m * n + a] * g[m * n + b];
                }
                ortho = std::max(ortho, std::abs(dot - (a == b ? 1.0 : 0.0)));
            }
        }
    }

    double round_trip = 0.0;
    double parseval = 0.0;
    std::vector<std::size_t> lengths = {1, 2, 3, 64, 511, 512, 513, 1000, 1021, 2048, 3000, 4095, 4096};
    for (const std::size_t n : lengths) {
        std::vector<float> x(n);
        for (auto& v : x) {
            v = static_cast<float>(normal(rng));
        }
        const auto c = dct(x);
        const auto back = idct(c);
        double ex = 0.0;
        double ec = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            round_trip = std::max(round_trip, std::abs(static_cast<double>(back[i]) - x[i]));
            ex += static_cast<double>(x[i]) * x[i];
            ec += static_cast<double>(c.values[i]) * c.values[i];
        }
        parseval = std::max(parseval, std::abs(ex - ec) / ex);
    }

    double fast_vs_naive = 0.0;
    for (std::size_t n = 1; n <= 64; ++n) {
        std::vector<double> x(n);
        for (auto& v : x) {
            v = normal(rng);
        }
        const auto expected = testing::naive_dct(x);
        for (const auto strategy : {DctPlan::Strategy::automatic, DctPlan::Strategy::fft}) {
            std::vector<double> c(n);
            DctPlan(n, strategy).forward(x, c);
            for (std::size_t m = 0; m < n; ++m) {
                fast_vs_naive = std::max(fast_vs_naive, std::abs(c[m] - expected[m]));
            }
        }
    }

    const double t = seconds_since(start);
    const bool pass = ortho <= 1e-5 && round_trip <= 1e-5 && parseval <= 1e-5 && fast_vs_naive <= 1e-6 && t < 10.0;
    return {pass, fmt("orthonormality %.2e (<=1e-5), round trip %.2e (<=1e-5), Parseval %.2e (<=1e-5), "
                      "fast vs naive %.2e (<=1e-6), %.2fs (<10s)",
                      ortho, round_trip, parseval, fast_vs_naive, t)};
}

// Low-band share of `mean_power` per layer, read back from the spectrum CSV.
std::vector<std::pair<double, double>> spectrum_bands(const std::string& csv, std::size_t layers, std::size_t low_bins,
                                                      std::size_t n) {
    std::vector<double> low(layers, 0.0);
    std::vector<double> total(layers, 0.0);
    std::vector<double> high_mean(layers, 0.0);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        std::vector<std::string> f;
        std::istringstream ls(line);
        std::string field;
        while (std::getline(ls, field, ',')) {
            f.push_back(field);
        }
        if (f.size() != 7 || f[1] != "all") {
            continue;
        }
        const std::size_t layer = std::stoul(f[0]);
        const std::size_t bin = std::stoul(f[2]);
        const double p = std::stod(f[5]);
        total[layer] += p;
        (bin < low_bins ? low[layer] : high_mean[layer]) += p;
    }
    std::vector<std::pair<double, double>> out;
    for (std::size_t l = 0; l < layers; ++l) {
        const double low_mean = low[l] / static_cast<double>(low_bins);
        const double hi_mean = high_mean[l] / static_cast<double>(n - low_bins);
        out.emplace_back(low[l] / total[l], hi_mean > 0.0 ? low_mean / hi_mean : INFINITY);
    }
    return out;
}

// 2. Spectrum command on clean and noisy synthetic dumps.
Outcome low_frequency_concentration() {
    const auto start = Clock::now();
    testing::TempDir dir("accept_spectrum");
    SynthSpec s;
    s.num_layers = 4;
    s.kv_heads = 2;
    s.head_dim = 32;
    s.seq_len = 512;
    s.base_modes = 8;
    s.outliers_per_layer = 0;

    double clean_worst = 1.0;
    double noisy_worst = 1.0;
    double ratio_worst = INFINITY;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        for (const double sigma : {0.0, 0.1}) {
            s.noise_sigma = sigma;
            s.seed = seed;
            write_text_file(dir / "spec.json", synth_spec_to_json(s));
            if (cli({"synth", "--spec", (dir / "spec.json").string(), "--out", (dir / "d.fkv").string(), "--truth",
                     (dir / "t.json").string()}) != 0 ||
                cli({"spectrum", "--input", (dir / "d.fkv").string(), "--out", (dir / "s.csv").string()}) != 0) {
                return {false, "CLI invocation failed"};
            }
            for (const auto& [share, ratio] : spectrum_bands(read_text_file(dir / "s.csv"), 4, 8, 512)) {
                if (sigma == 0.0) {
                    clean_worst = std::min(clean_worst, share);
                } else {
                    noisy_worst = std::min(noisy_worst, share);
                    ratio_worst = std::min(ratio_worst, ratio);
                }
            }
        }
    }
    const double t = seconds_since(start);
    const bool pass = clean_worst >= 0.99 && noisy_worst >= 0.9 && ratio_worst >= 100.0 && t < 5.0;
    return {pass, fmt("first 8 bins hold %.6f of power at sigma=0 (>=0.99); at sigma=0.1*amplitude %.4f (>=0.9) "
                      "with low/high per-bin ratio %.0f (>=100), %.2fs (<5s)",
                      clean_worst, noisy_worst, ratio_worst, t)};
}

SynthSpec recovery_spec(std::uint64_t seed) {
    SynthSpec s;
    s.num_layers = 1;
    s.kv_heads = 2;
    s.head_dim = 16;
    s.seq_len = 512;
    s.base_modes = 8;
    s.outliers_per_layer = 16;
    s.noise_sigma = 0.1;
    s.outlier_amplitude = 12.0;
    s.seed = seed;
    return s;
}

// 3. Planted-outlier recall at budget k + |protected|, with baselines as controls.
Outcome outlier_recovery() {
    const auto start = Clock::now();
    const std::size_t seeds = 100;
    const std::size_t k = 16;
    const std::size_t n = 512;
    CompressionConfig c;
    c.gamma = 0.1;
    c.sink_count = 4;
    c.recent_count = 8;
    const std::size_t budget = k + c.sink_count + c.recent_count;
    c.rho = static_cast<double>(budget) / static_cast<double>(n);

    double spectral_recall = 0.0;
    std::size_t random_hits = 0;
    std::size_t recency_hits = 0;
    bool budget_ok = true;
    for (std::uint64_t seed = 0; seed < seeds; ++seed) {
        const SynthOutput synth = generate(recovery_spec(seed));
        const auto& planted = synth.truth.planted[0];
        for (const auto policy : {PolicyId::spectral, PolicyId::random_seeded, PolicyId::recency_sink}) {
            c.policy = policy;
            c.seed = seed;
            const auto plan = compress(synth.dump, c).plan;
            const auto& retained = plan.per_layer[0].retained;
            budget_ok = budget_ok && retained.size() == budget;
            const double recall = planted_recall(planted, retained);
            const auto hits = static_cast<std::size_t>(std::lround(recall * k));
            if (policy == PolicyId::spectral) {
                spectral_recall += recall;
            } else {
                (policy == PolicyId::random_seeded ? random_hits : recency_hits) += hits;
            }
        }
    }
    spectral_recall /= static_cast<double>(seeds);
    const double p = static_cast<double>(budget) / static_cast<double>(n);
    const double trials = static_cast<double>(seeds * k);
    const double mean = trials * p;
    const double sigma = std::sqrt(trials * p * (1.0 - p));
    const double z_random = (static_cast<double>(random_hits) - mean) / sigma;
    const double z_recency = (static_cast<double>(recency_hits) - mean) / sigma;
    const double t = seconds_since(start);
    const bool pass = budget_ok && spectral_recall >= 0.95 && std::abs(z_random) <= 3.0 &&
                      std::abs(z_recency) <= 3.0 && t < 60.0;
    return {pass, fmt("budget %zu, recall %.4f over %zu seeds (>=0.95); random %zu hits, recency %zu hits vs "
                      "expected %.1f +- 3*%.2f (z = %.2f, %.2f), %.2fs (<60s)",
                      budget, spectral_recall, seeds, random_hits, recency_hits, mean, sigma, z_random, z_recency, t)};
}

double mean_attention_error(const Metrics& m) {
    double acc = 0.0;
    for (const auto& l : m.layers) {
        acc += l.attention_error.value();
    }
    return acc / static_cast<double>(m.layers.size());
}

// 4. Paired comparison against random eviction at equal rho.
Outcome selection_quality() {
    const auto start = Clock::now();
    const std::size_t seeds = 50;
    const std::vector<double> rhos = {0.2, 0.1, 0.05};
    std::vector<std::size_t> wins(rhos.size(), 0);
    std::vector<double> spectral_err(rhos.size(), 0.0);
    std::vector<double> random_err(rhos.size(), 0.0);
    for (std::uint64_t seed = 0; seed < seeds; ++seed) {
        SynthSpec s; // generator defaults: N = 512, 16 spikes of amplitude 12 per layer
        s.num_layers = 2;
        s.seed = seed;
        const KvDump dump = generate(s).dump;
        const QueryMatrix q = random_queries(16, s.kv_heads * s.head_dim, seed);
        for (std::size_t i = 0; i < rhos.size(); ++i) {
            CompressionConfig c;
            c.rho = rhos[i];
            c.gamma = 0.1;
            c.seed = seed;
            c.policy = PolicyId::spectral;
            const double e_spec = mean_attention_error(evaluate_plan(dump, compress(dump, c).plan, &q));
            c.policy = PolicyId::random_seeded;
            const double e_rand = mean_attention_error(evaluate_plan(dump, compress(dump, c).plan, &q));
            wins[i] += e_spec < e_rand ? 1 : 0;
            spectral_err[i] += e_spec / seeds;
            random_err[i] += e_rand / seeds;
        }
    }
    const double t = seconds_since(start);
    bool pass = t < 120.0;
    std::string detail;
    for (std::size_t i = 0; i < rhos.size(); ++i) {
        pass = pass && wins[i] * 10 >= seeds * 9;
        detail += fmt("rho %.2f: %zu/%zu wins (mean error %.4f vs %.4f); ", rhos[i], wins[i], seeds, spectral_err[i],
                      random_err[i]);
    }
    return {pass, detail + fmt("need >=90%% each, %.2fs (<120s)", t)};
}

// 5. Fuzzed allocation instances with active caps and floors.
Outcome budget_exactness() {
    const auto start = Clock::now();
    std::mt19937_64 rng(2026);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::size_t instances = 0;
    std::size_t violations = 0;
    std::size_t with_cap = 0;
    std::size_t with_floor = 0;
    while (instances < 1000) {
        const std::size_t layers = 2 + rng() % 31;
        const std::size_t n = 8 + rng() % 2000;
        const double rho = 0.02 + 0.96 * u(rng);
        std::vector<LayerEnergyRatio> r(layers);
        for (std::size_t l = 0; l < layers; ++l) {
            // heavy-tailed weights make a few layers hit their cap
            const double x = u(rng);
            r[l].r = rng() % 5 == 0 ? 0.0 : std::pow(x, 6.0) * 2.0;
            r[l].layer_index = l;
        }
        const auto total = static_cast<std::size_t>(std::llround(rho * static_cast<double>(n * layers)));
        std::vector<std::size_t> floors(layers);
        const std::size_t floor_level = std::min(n, static_cast<std::size_t>(u(rng) * 0.8 * total / layers));
        for (std::size_t l = 0; l < layers; ++l) {
            floors[l] = rng() % 2 == 0 ? floor_level : floor_level / 2;
        }
        if (std::accumulate(floors.begin(), floors.end(), std::size_t{0}) > total) {
            continue;
        }
        const auto a = allocate(r, rho, n, floors, rng() % 4 == 0 ? AllocationMode::uniform : AllocationMode::dynamic);
        ++instances;
        const std::size_t sum = std::accumulate(a.quotas.begin(), a.quotas.end(), std::size_t{0});
        bool cap_hit = false;
        bool floor_hit = false;
        bool ok = sum == total && a.total_budget == total;
        for (std::size_t l = 0; l < layers; ++l) {
            ok = ok && a.quotas[l] >= floors[l] && a.quotas[l] <= n;
            cap_hit = cap_hit || a.quotas[l] == n;
            floor_hit = floor_hit || (floors[l] > 0 && a.quotas[l] == floors[l]);
        }
        violations += ok ? 0 : 1;
        with_cap += cap_hit ? 1 : 0;
        with_floor += floor_hit ? 1 : 0;
    }
    const double t = seconds_since(start);
    const bool pass = violations == 0 && with_cap >= 100 && with_floor >= 100 && t < 10.0;
    return {pass, fmt("%zu instances, %zu violations of sum=round(rho*N*L) or floor<=quota<=N; caps active in %zu, "
                      "floors active in %zu, %.2fs (<10s)",
                      instances, violations, with_cap, with_floor, t)};
}

// 6. Recall across the cutoff factor on dumps with base_modes = ceil(0.1 N).
Outcome gamma_ablation() {
    const auto start = Clock::now();
    const std::size_t n = 512;
    const std::size_t seeds = 60;
    std::vector<double> gammas;
    for (int g = 1; g <= 10; ++g) {
        gammas.push_back(g / 10.0);
    }
    std::vector<double> recall(gammas.size(), 0.0);
    for (std::uint64_t seed = 0; seed < seeds; ++seed) {
        SynthSpec s = recovery_spec(seed);
        s.seq_len = n;
        s.base_modes = static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(n)));
        const SynthOutput synth = generate(s);
        for (std::size_t i = 0; i < gammas.size(); ++i) {
            CompressionConfig c;
            c.gamma = gammas[i];
            c.rho = 28.0 / static_cast<double>(n);
            const auto plan = compress(synth.dump, c).plan;
            recall[i] += planted_recall(synth.truth.planted[0], plan.per_layer[0].retained) / seeds;
        }
    }
    const double best = *std::max_element(recall.begin(), recall.end());
    const double best_low = *std::max_element(recall.begin(), recall.begin() + 3);
    bool monotone = true;
    for (std::size_t i = 5; i < gammas.size(); ++i) {
        monotone = monotone && recall[i] <= recall[i - 1];
    }
    std::string curve;
    for (std::size_t i = 0; i < gammas.size(); ++i) {
        curve += fmt("%s%.1f:%.3f", i ? " " : "", gammas[i], recall[i]);
    }
    const double t = seconds_since(start);
    const bool pass = best_low >= best && monotone && t < 60.0;
    return {pass, fmt("recall by gamma [%s]; max in [0.1,0.3]: %s; non-increasing from 0.5: %s, %.2fs (<60s)",
                      curve.c_str(), best_low >= best ? "yes" : "no", monotone ? "yes" : "no", t)};
}

double median_compress_seconds(std::size_t n, int reps) {
    SynthSpec s;
    s.num_layers = 1;
    s.kv_heads = 2;
    s.head_dim = 128;
    s.seq_len = n;
    s.outliers_per_layer = 16;
    s.seed = 5;
    const KvDump dump = generate(s).dump;
    CompressionConfig c;
    c.rho = 0.2;
    std::vector<double> times;
    for (int r = 0; r < reps; ++r) {
        const auto start = Clock::now();
        const auto result = compress(dump, c);
        times.push_back(seconds_since(start));
        if (result.plan.per_layer.empty()) {
            return -1.0;
        }
    }
    std::sort(times.begin(), times.end());
    return times[times.size() / 2];
}

// 7. Compression wall time from N = 2048 to N = 8192.
Outcome latency_scaling() {
    median_compress_seconds(2048, 1); // warm-up
    const double t2k = median_compress_seconds(2048, 7);
    const double t8k = median_compress_seconds(8192, 7);
    const double ratio = t8k / t2k;
    return {ratio <= 8.0, fmt("single layer, kv_heads*head_dim = 256: median %.2f ms at N=2048, %.2f ms at N=8192, "
                              "ratio %.2f (<=8)",
                              t2k * 1e3, t8k * 1e3, ratio)};
}

// 8. Bytes after / bytes before equals the achieved ratio.
Outcome memory_accounting() {
    bool exact = true;
    double worst_saving = 1.0;
    std::size_t cases = 0;
    for (const auto dtype : {DType::f32, DType::f16}) {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            SynthSpec s;
            s.num_layers = 3;
            s.seq_len = 300 + 37 * seed;
            s.head_dim = 16;
            s.seed = seed;
            s.dtype = dtype;
            s.layer_noise_sigmas = {0.05, 0.1, 0.3};
            const KvDump dump = generate(s).dump;
            for (const auto mode : {AllocationMode::dynamic, AllocationMode::uniform}) {
                CompressionConfig c;
                c.rho = 0.2;
                c.allocation_mode = mode;
                const Metrics m = evaluate_plan(dump, compress(dump, c).plan);
                const double ratio = static_cast<double>(m.bytes_after) / static_cast<double>(m.bytes_before);
                exact = exact && ratio == m.rho_achieved;
                worst_saving = std::min(worst_saving, 1.0 - ratio);
                ++cases;
            }
        }
    }
    return {exact && worst_saving >= 0.79,
            fmt("%zu cases (f32 and f16): bytes_after/bytes_before == rho_achieved exactly: %s; memory saved at "
                "rho=0.2: %.4f",
                cases, exact ? "yes" : "no", worst_saving)};
}

// 9. FKV1 round trip and plan determinism across runs and thread counts.
Outcome format_and_determinism() {
    testing::TempDir dir("accept_format");
    bool round_trip = true;
    for (const auto dtype : {DType::f32, DType::f16}) {
        SynthSpec s;
        s.num_layers = 3;
        s.seq_len = 333;
        s.head_dim = 8;
        s.dtype = dtype;
        s.text_prefix = 5;
        write_dump(generate(s).dump, dir / "a.fkv");
        write_dump(read_dump(dir / "a.fkv"), dir / "b.fkv");
        round_trip = round_trip && read_file(dir / "a.fkv") == read_file(dir / "b.fkv");
    }

    SynthSpec s;
    s.num_layers = 8;
    s.seq_len = 700;
    s.head_dim = 16;
    s.seed = 3;
    s.layer_noise_sigmas = {0.05, 0.1, 0.15, 0.2, 0.05, 0.3, 0.1, 0.2};
    write_dump(generate(s).dump, dir / "d.fkv");
    std::vector<std::string> plans;
    for (const std::string threads : {"1", "1", "2", "4", "8"}) {
        const auto plan_path = (dir / ("p" + std::to_string(plans.size()) + ".json")).string();
        if (cli({"compress", "--input", (dir / "d.fkv").string(), "--rho", "0.15", "--threads", threads, "--plan",
                 plan_path, "--metrics", (dir / "m.json").string()}) != 0) {
            return {false, "CLI invocation failed"};
        }
        plans.push_back(read_text_file(plan_path));
    }
    const bool identical = std::all_of(plans.begin(), plans.end(), [&](const auto& p) { return p == plans.front(); });
    return {round_trip && identical,
            fmt("write(read(f)) == f byte-for-byte (f32, f16): %s; plan JSON identical over 2 runs and 1/2/4/8 "
                "threads: %s",
                round_trip ? "yes" : "no", identical ? "yes" : "no")};
}

} // namespace
} // namespace spectrakv

int main() {
    using namespace spectrakv;
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"spectral correctness", spectral_correctness},
        {"low-frequency concentration", low_frequency_concentration},
        {"outlier recovery", outlier_recovery},
        {"selection quality vs random eviction", selection_quality},
        {"budget exactness", budget_exactness},
        {"cutoff factor ablation", gamma_ablation},
        {"method latency scaling", latency_scaling},
        {"memory accounting", memory_accounting},
        {"format and determinism", format_and_determinism},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s [%zu] %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
        std::fflush(stdout);
        failures += o.pass ? 0 : 1;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
