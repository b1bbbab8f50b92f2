// Copyright 2026 The spectrakv Authors
// SPDX-License-Identifier: Apache-2.0

// Independent reference implementations used as test oracles. They favour
// obviousness over speed and share no code with the library.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "spectrakv/cache.hpp"

namespace spectrakv::testing {

/// O(N^2) orthonormal DCT-II in long double.
inline std::vector<double> naive_dct(const std::vector<double>& x) {
    const std::size_t n = x.size();
    std::vector<double> out(n);
    const long double pi = std::numbers::pi_v<long double>;
    for (std::size_t m = 0; m < n; ++m) {
        long double acc = 0.0L;
        for (std::size_t i = 0; i < n; ++i) {
            acc += x[i] * std::cos(pi * m * (2.0L * i + 1.0L) / (2.0L * n));
        }
        const long double alpha = m == 0 ? std::sqrt(1.0L / n) : std::sqrt(2.0L / n);
        out[m] = static_cast<double>(alpha * acc);
    }
    return out;
}

/// O(N^2) orthonormal DCT-III (inverse of naive_dct).
inline std::vector<double> naive_idct(const std::vector<double>& c) {
    const std::size_t n = c.size();
    std::vector<double> out(n);
    const long double pi = std::numbers::pi_v<long double>;
    for (std::size_t i = 0; i < n; ++i) {
        long double acc = 0.0L;
        for (std::size_t m = 0; m < n; ++m) {
            const long double alpha = m == 0 ? std::sqrt(1.0L / n) : std::sqrt(2.0L / n);
            acc += alpha * c[m] * std::cos(pi * m * (2.0L * i + 1.0L) / (2.0L * n));
        }
        out[i] = static_cast<double>(acc);
    }
    return out;
}

inline std::size_t naive_cutoff(std::size_t n, double gamma) {
    const double raw = gamma * static_cast<double>(n);
    const double nearest = std::round(raw);
    const double c = std::abs(raw - nearest) <= 1e-9 ? nearest : std::ceil(raw);
    return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(1.0, c)), 1, n);
}

/// Column of one (head, channel) pair as doubles.
inline std::vector<double> column(const Tensor3& t, std::size_t h, std::size_t d) {
    std::vector<double> out(t.seq());
    for (std::size_t n = 0; n < t.seq(); ++n) {
        out[n] = t.at(h, n, d);
    }
    return out;
}

/// Low-passed reconstruction by naive transforms.
inline Tensor3 naive_base(const Tensor3& t, double gamma) {
    Tensor3 out(t.heads(), t.seq(), t.dim());
    const std::size_t keep = naive_cutoff(t.seq(), gamma);
    for (std::size_t h = 0; h < t.heads(); ++h) {
        for (std::size_t d = 0; d < t.dim(); ++d) {
            auto c = naive_dct(column(t, h, d));
            std::fill(c.begin() + static_cast<std::ptrdiff_t>(keep), c.end(), 0.0);
            const auto x = naive_idct(c);
            for (std::size_t n = 0; n < t.seq(); ++n) {
                out.at(h, n, d) = static_cast<float>(x[n]);
            }
        }
    }
    return out;
}

/// Mean over heads and channels of the squared residual, per position.
inline std::vector<double> naive_deviation(const Tensor3& t, const Tensor3& base) {
    std::vector<double> dev(t.seq(), 0.0);
    for (std::size_t n = 0; n < t.seq(); ++n) {
        double acc = 0.0;
        for (std::size_t h = 0; h < t.heads(); ++h) {
            for (std::size_t d = 0; d < t.dim(); ++d) {
                const double r = static_cast<double>(t.at(h, n, d)) - base.at(h, n, d);
                acc += r * r;
            }
        }
        dev[n] = acc / static_cast<double>(t.heads() * t.dim());
    }
    return dev;
}

/// High-band energy fraction of one tensor by naive transforms.
inline double naive_high_band_fraction(const Tensor3& t, double gamma) {
    const std::size_t keep = naive_cutoff(t.seq(), gamma);
    double total = 0.0;
    double high = 0.0;
    for (std::size_t h = 0; h < t.heads(); ++h) {
        for (std::size_t d = 0; d < t.dim(); ++d) {
            const auto c = naive_dct(column(t, h, d));
            for (std::size_t m = 0; m < c.size(); ++m) {
                total += c[m] * c[m];
                if (m >= keep) {
                    high += c[m] * c[m];
                }
            }
        }
    }
    return total == 0.0 ? 0.0 : high / total;
}

/// Sort-everything selection: protected first, then score descending, index ascending.
inline std::vector<std::size_t> brute_force_select(const std::vector<double>& scores, std::size_t budget,
                                                   const std::vector<std::size_t>& protected_positions) {
    std::vector<bool> is_protected(scores.size(), false);
    for (const auto p : protected_positions) {
        is_protected[p] = true;
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (is_protected[a] != is_protected[b]) {
            return static_cast<bool>(is_protected[a]);
        }
        if (scores[a] != scores[b]) {
            return scores[a] > scores[b];
        }
        return a < b;
    });
    order.resize(std::min(budget, scores.size()));
    std::sort(order.begin(), order.end());
    return order;
}

/**
 * Real-valued water-filling by bisection on the water level: find lambda
 * with sum clamp(lambda w, floor, cap) = total. Zero-weight layers sit at
 * their floors unless the positive-weight layers saturate, in which case a
 * second level mu fills them as clamp(mu, floor, cap).
 */
inline std::vector<double> oracle_water_fill(const std::vector<double>& weights, double total,
                                             const std::vector<double>& floors, const std::vector<double>& caps) {
    const std::size_t n = weights.size();
    const auto fill = [&](double level, bool zero_group) {
        std::vector<double> share(n);
        for (std::size_t i = 0; i < n; ++i) {
            const bool is_zero = weights[i] <= 0.0;
            if (zero_group) {
                share[i] = is_zero ? std::clamp(level, floors[i], caps[i]) : caps[i];
            } else {
                share[i] = is_zero ? floors[i] : std::clamp(level * weights[i], floors[i], caps[i]);
            }
        }
        return share;
    };
    const auto sum = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); };

    bool zero_group = false;
    double hi = 1.0;
    if (sum(fill(1e300, false)) < total) {
        zero_group = true;
    }
    while (sum(fill(hi, zero_group)) < total && hi < 1e300) {
        hi *= 2.0;
    }
    double lo = 0.0;
    for (int iter = 0; iter < 400; ++iter) {
        const double mid = 0.5 * (lo + hi);
        (sum(fill(mid, zero_group)) < total ? lo : hi) = mid;
    }
    return fill(hi, zero_group);
}

/// Largest-remainder rounding of shares that sum to an integer total.
inline std::vector<std::size_t> oracle_round(const std::vector<double>& shares, std::size_t total) {
    std::vector<std::size_t> out(shares.size());
    std::vector<std::pair<double, std::size_t>> rem;
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < shares.size(); ++i) {
        const double f = std::floor(shares[i] + 1e-9);
        out[i] = static_cast<std::size_t>(f);
        assigned += out[i];
        rem.emplace_back(shares[i] - f, i);
    }
    // remainders are compared at 1e-6 resolution so bisection noise cannot reorder ties
    for (auto& r : rem) {
        r.first = std::round(r.first * 1e6);
    }
    std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < total; ++k, ++assigned) {
        ++out[rem[k].second];
    }
    return out;
}

/// Dense softmax attention for one head in long double.
inline std::vector<double> naive_attention(const std::vector<float>& q, const Tensor3& keys, const Tensor3& values,
                                           std::size_t head, const std::vector<std::size_t>& positions) {
    const std::size_t dim = keys.dim();
    std::vector<long double> logits;
    for (const auto p : positions) {
        long double dot = 0.0L;
        for (std::size_t d = 0; d < dim; ++d) {
            dot += static_cast<long double>(q[d]) * keys.at(head, p, d);
        }
        logits.push_back(dot / std::sqrt(static_cast<long double>(dim)));
    }
    std::vector<double> out(dim, 0.0);
    if (positions.empty()) {
        return out;
    }
    const long double mx = *std::max_element(logits.begin(), logits.end());
    long double z = 0.0L;
    for (auto& l : logits) {
        l = std::exp(l - mx);
        z += l;
    }
    for (std::size_t d = 0; d < dim; ++d) {
        long double acc = 0.0L;
        for (std::size_t i = 0; i < positions.size(); ++i) {
            acc += logits[i] * values.at(head, positions[i], d);
        }
        out[d] = static_cast<double>(acc / z);
    }
    return out;
}

inline Tensor3 random_tensor(std::size_t heads, std::size_t seq, std::size_t dim, std::mt19937_64& rng,
                             double scale = 1.0) {
    std::normal_distribution<double> normal(0.0, scale);
    Tensor3 t(heads, seq, dim);
    for (std::size_t h = 0; h < heads; ++h) {
        for (float& v : t.head(h)) {
            v = static_cast<float>(normal(rng));
        }
    }
    return t;
}

inline LayerKv random_layer(std::size_t heads, std::size_t seq, std::size_t dim, std::mt19937_64& rng,
                            std::size_t index = 0) {
    Tensor3 k = random_tensor(heads, seq, dim, rng);
    Tensor3 v = random_tensor(heads, seq, dim, rng);
    return LayerKv{std::move(k), std::move(v), index};
}

inline KvDump random_dump(std::size_t layers, std::size_t heads, std::size_t seq, std::size_t dim,
                          std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    KvDump dump;
    for (std::size_t l = 0; l < layers; ++l) {
        dump.layers.push_back(random_layer(heads, seq, dim, rng, l));
    }
    dump.token_tags.assign(seq, TokenTag::vision);
    return dump;
}

/// Fresh, empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        m_path = std::filesystem::temp_directory_path() /
                 ("spectrakv_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(m_path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(m_path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::filesystem::path operator/(const std::string& name) const { return m_path / name; }
    const std::filesystem::path& path() const { return m_path; }

private:
    std::filesystem::path m_path;
};

} // namespace spectrakv::testing
