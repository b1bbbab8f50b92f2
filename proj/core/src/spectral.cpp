// Copyright 2026 The spectrakv Authors
// SPDX-License-Identifier: Apache-2.0

#include "spectrakv/spectral.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "spectrakv/error.hpp"

namespace spectrakv {

namespace {

using cplx = std::complex<double>;

// std::complex operator* carries NaN/inf recovery that blocks vectorization.
inline cplx mul(cplx a, cplx b) noexcept {
    return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

template <typename T>
void require_finite(std::span<const T> values, const char* what) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            fail(ErrorCode::non_finite, std::string(what) + ": non-finite value at index " + std::to_string(i));
        }
    }
}

double alpha(std::size_t m, std::size_t n) {
    return m == 0 ? std::sqrt(1.0 / static_cast<double>(n)) : std::sqrt(2.0 / static_cast<double>(n));
}

} // namespace

double PowerSpectrum::total() const noexcept {
    return std::accumulate(power.begin(), power.end(), 0.0);
}

void validate_gamma(double gamma) {
    if (!(gamma >= 0.0 && gamma <= 1.0)) {
        fail(ErrorCode::invalid_argument, "gamma must lie in [0, 1], got " + std::to_string(gamma));
    }
}

std::size_t cutoff_index(std::size_t n, double gamma) {
    validate_gamma(gamma);
    const double scaled = gamma * static_cast<double>(n);
    const double nearest = std::round(scaled);
    const double kept = std::abs(scaled - nearest) <= 1e-9 * std::max(1.0, scaled) ? nearest : std::ceil(scaled);
    return std::clamp<std::size_t>(static_cast<std::size_t>(kept), 1, std::max<std::size_t>(n, 1));
}

// ---------------------------------------------------------------------------
// Fft

Fft::Fft(std::size_t n) : m_n(n), m_pow2(std::has_single_bit(n)) {
    if (n == 0) {
        fail(ErrorCode::invalid_argument, "FFT length must be >= 1");
    }
    const std::size_t radix_len = m_pow2 ? n : std::bit_ceil(2 * n - 1);
    m_roots.resize(radix_len / 2);
    for (std::size_t k = 0; k < m_roots.size(); ++k) {
        const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(radix_len);
        m_roots[k] = {std::cos(angle), std::sin(angle)};
    }
    m_bitrev.resize(radix_len);
    const int bits = std::countr_zero(radix_len);
    for (std::size_t i = 0; i < radix_len; ++i) {
        std::size_t r = 0;
        for (int b = 0; b < bits; ++b) {
            r |= ((i >> b) & 1U) << (bits - 1 - b);
        }
        m_bitrev[i] = r;
    }
    if (m_pow2) {
        return;
    }

    m_conv_n = radix_len;
    m_chirp.resize(n);
    const std::uint64_t period = 2 * static_cast<std::uint64_t>(n);
    for (std::size_t k = 0; k < n; ++k) {
        // k^2 mod 2n keeps the angle small and exact for large k.
        const std::uint64_t k2 = (static_cast<std::uint64_t>(k) * k) % period;
        const double angle = -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
        m_chirp[k] = {std::cos(angle), std::sin(angle)};
    }
    m_kernel.assign(m_conv_n, cplx{});
    m_kernel[0] = std::conj(m_chirp[0]);
    for (std::size_t k = 1; k < n; ++k) {
        m_kernel[k] = std::conj(m_chirp[k]);
        m_kernel[m_conv_n - k] = std::conj(m_chirp[k]);
    }
    radix2(m_kernel, false);
}

void Fft::radix2(std::span<cplx> data, bool invert) const {
    const std::size_t len = data.size();
    for (std::size_t i = 0; i < len; ++i) {
        if (i < m_bitrev[i]) {
            std::swap(data[i], data[m_bitrev[i]]);
        }
    }
    for (std::size_t half = 1; half < len; half *= 2) {
        const std::size_t stride = len / (2 * half);
        for (std::size_t start = 0; start < len; start += 2 * half) {
            for (std::size_t j = 0; j < half; ++j) {
                const cplx w = invert ? std::conj(m_roots[j * stride]) : m_roots[j * stride];
                const cplx u = data[start + j];
                const cplx v = mul(data[start + j + half], w);
                data[start + j] = u + v;
                data[start + j + half] = u - v;
            }
        }
    }
}

void Fft::bluestein(std::span<cplx> data) const {
    std::vector<cplx> work(m_conv_n);
    for (std::size_t k = 0; k < m_n; ++k) {
        work[k] = mul(data[k], m_chirp[k]);
    }
    radix2(work, false);
    for (std::size_t k = 0; k < m_conv_n; ++k) {
        work[k] = mul(work[k], m_kernel[k]);
    }
    radix2(work, true);
    const double scale = 1.0 / static_cast<double>(m_conv_n);
    for (std::size_t k = 0; k < m_n; ++k) {
        data[k] = mul(work[k] * scale, m_chirp[k]);
    }
}

void Fft::forward(std::span<cplx> data) const {
    if (data.size() != m_n) {
        fail(ErrorCode::shape_mismatch, "FFT input length mismatch");
    }
    if (m_pow2) {
        radix2(data, false);
    } else {
        bluestein(data);
    }
}

void Fft::inverse(std::span<cplx> data) const {
    if (data.size() != m_n) {
        fail(ErrorCode::shape_mismatch, "FFT input length mismatch");
    }
    const double scale = 1.0 / static_cast<double>(m_n);
    if (m_pow2) {
        radix2(data, true);
        for (auto& v : data) {
            v *= scale;
        }
        return;
    }
    for (auto& v : data) {
        v = std::conj(v);
    }
    bluestein(data);
    for (auto& v : data) {
        v = std::conj(v) * scale;
    }
}

// ---------------------------------------------------------------------------
// DctPlan

DctPlan::DctPlan(std::size_t n, Strategy strategy) : m_n(n) {
    if (n == 0) {
        fail(ErrorCode::invalid_argument, "DCT length must be >= 1");
    }
    m_use_fft = strategy == Strategy::fft || (strategy == Strategy::automatic && n > kDirectMaxLength);
    m_alpha.resize(n);
    for (std::size_t m = 0; m < n; ++m) {
        m_alpha[m] = alpha(m, n);
    }
    const double nd = static_cast<double>(n);
    if (!uses_fft()) {
        m_basis.resize(n * n);
        for (std::size_t m = 0; m < n; ++m) {
            for (std::size_t i = 0; i < n; ++i) {
                // Reduce m(2i+1) mod 4n before scaling so the argument stays in [0, 2pi).
                const std::size_t phase = (m * (2 * i + 1)) % (4 * n);
                m_basis[m * n + i] =
                    m_alpha[m] * std::cos(std::numbers::pi * static_cast<double>(phase) / (2.0 * nd));
            }
        }
        return;
    }
    m_fft = Fft(n);
    m_twiddle.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double angle = -std::numbers::pi * static_cast<double>(k) / (2.0 * nd);
        m_twiddle[k] = {std::cos(angle), std::sin(angle)};
    }
}

void DctPlan::forward(std::span<const double> signal, std::span<double> coeffs) const {
    if (signal.size() != m_n || coeffs.size() != m_n) {
        fail(ErrorCode::shape_mismatch, "DCT length mismatch");
    }
    if (!uses_fft()) {
        for (std::size_t m = 0; m < m_n; ++m) {
            const double* basis_row = &m_basis[m * m_n];
            double acc = 0.0;
            for (std::size_t i = 0; i < m_n; ++i) {
                acc += basis_row[i] * signal[i];
            }
            coeffs[m] = acc;
        }
        return;
    }
    // Makhoul: even samples ascending, odd samples descending, then one FFT.
    std::vector<cplx> v(m_n);
    for (std::size_t j = 0; 2 * j < m_n; ++j) {
        v[j] = signal[2 * j];
    }
    for (std::size_t j = 0; 2 * j + 1 < m_n; ++j) {
        v[m_n - 1 - j] = signal[2 * j + 1];
    }
    m_fft.forward(v);
    for (std::size_t k = 0; k < m_n; ++k) {
        coeffs[k] = m_alpha[k] * (v[k].real() * m_twiddle[k].real() - v[k].imag() * m_twiddle[k].imag());
    }
}

void DctPlan::inverse(std::span<const double> coeffs, std::span<double> signal) const {
    if (signal.size() != m_n || coeffs.size() != m_n) {
        fail(ErrorCode::shape_mismatch, "IDCT length mismatch");
    }
    if (!uses_fft()) {
        std::fill(signal.begin(), signal.end(), 0.0);
        for (std::size_t m = 0; m < m_n; ++m) {
            const double* basis_row = &m_basis[m * m_n];
            const double c = coeffs[m];
            for (std::size_t i = 0; i < m_n; ++i) {
                signal[i] += basis_row[i] * c;
            }
        }
        return;
    }
    std::vector<cplx> v(m_n);
    v[0] = coeffs[0] / m_alpha[0];
    for (std::size_t k = 1; k < m_n; ++k) {
        const double re = coeffs[k] / m_alpha[k];
        const double im = coeffs[m_n - k] / m_alpha[m_n - k];
        v[k] = mul(std::conj(m_twiddle[k]), cplx(re, -im));
    }
    m_fft.inverse(v);
    for (std::size_t j = 0; 2 * j < m_n; ++j) {
        signal[2 * j] = v[j].real();
    }
    for (std::size_t j = 0; 2 * j + 1 < m_n; ++j) {
        signal[2 * j + 1] = v[m_n - 1 - j].real();
    }
}

void DctPlan::forward_block(std::span<const double> block, std::span<double> out, std::size_t width) const {
    if (block.size() != m_n * width || out.size() != m_n * width) {
        fail(ErrorCode::shape_mismatch, "DCT block size mismatch");
    }
    if (!uses_fft()) {
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t m = 0; m < m_n; ++m) {
            double* dst = &out[m * width];
            for (std::size_t i = 0; i < m_n; ++i) {
                const double g = m_basis[m * m_n + i];
                const double* src = &block[i * width];
                for (std::size_t d = 0; d < width; ++d) {
                    dst[d] += g * src[d];
                }
            }
        }
        return;
    }
    std::vector<double> column(m_n);
    std::vector<double> spectrum(m_n);
    for (std::size_t d = 0; d < width; ++d) {
        for (std::size_t i = 0; i < m_n; ++i) {
            column[i] = block[i * width + d];
        }
        forward(column, spectrum);
        for (std::size_t m = 0; m < m_n; ++m) {
            out[m * width + d] = spectrum[m];
        }
    }
}

void DctPlan::inverse_block(std::span<const double> coeffs, std::span<double> out, std::size_t width,
                            std::size_t bands) const {
    if (coeffs.size() != m_n * width || out.size() != m_n * width) {
        fail(ErrorCode::shape_mismatch, "IDCT block size mismatch");
    }
    bands = std::min(bands, m_n);
    if (!uses_fft()) {
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t i = 0; i < m_n; ++i) {
            double* dst = &out[i * width];
            for (std::size_t m = 0; m < bands; ++m) {
                const double g = m_basis[m * m_n + i];
                const double* src = &coeffs[m * width];
                for (std::size_t d = 0; d < width; ++d) {
                    dst[d] += g * src[d];
                }
            }
        }
        return;
    }
    std::vector<double> spectrum(m_n);
    std::vector<double> column(m_n);
    for (std::size_t d = 0; d < width; ++d) {
        for (std::size_t m = 0; m < m_n; ++m) {
            spectrum[m] = m < bands ? coeffs[m * width + d] : 0.0;
        }
        inverse(spectrum, column);
        for (std::size_t i = 0; i < m_n; ++i) {
            out[i * width + d] = column[i];
        }
    }
}

// ---------------------------------------------------------------------------
// Single-channel operations

SpectralCoeffs dct(std::span<const float> signal) {
    if (signal.empty()) {
        fail(ErrorCode::invalid_argument, "dct: signal must have length >= 1");
    }
    require_finite(signal, "dct");
    const DctPlan plan(signal.size());
    std::vector<double> in(signal.begin(), signal.end());
    std::vector<double> out(signal.size());
    plan.forward(in, out);
    return SpectralCoeffs{std::vector<float>(out.begin(), out.end())};
}

std::vector<float> idct(const SpectralCoeffs& coeffs) {
    if (coeffs.values.empty()) {
        fail(ErrorCode::invalid_argument, "idct: coefficients must have length >= 1");
    }
    require_finite(std::span<const float>(coeffs.values), "idct");
    const DctPlan plan(coeffs.size());
    std::vector<double> in(coeffs.values.begin(), coeffs.values.end());
    std::vector<double> out(coeffs.size());
    plan.inverse(in, out);
    return std::vector<float>(out.begin(), out.end());
}

SpectralCoeffs lowpass(const SpectralCoeffs& coeffs, double gamma) {
    const std::size_t keep = cutoff_index(coeffs.size(), gamma);
    SpectralCoeffs out = coeffs;
    for (std::size_t m = keep; m < out.values.size(); ++m) {
        out.values[m] = 0.0f;
    }
    return out;
}

PowerSpectrum power_spectrum(const SpectralCoeffs& coeffs) {
    require_finite(std::span<const float>(coeffs.values), "power_spectrum");
    PowerSpectrum out;
    out.power.reserve(coeffs.size());
    for (const float c : coeffs.values) {
        const double v = c;
        out.power.push_back(v * v);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Layer-level helpers

LayerSpectrum compute_layer_spectrum(const LayerKv& layer, const DctPlan& plan) {
    if (plan.size() != layer.seq()) {
        fail(ErrorCode::shape_mismatch, "DCT plan length does not match layer sequence length");
    }
    LayerSpectrum out;
    out.heads = layer.heads();
    out.seq = layer.seq();
    out.dim = layer.dim();
    const std::size_t slab = out.seq * out.dim;
    out.keys.resize(out.heads * slab);
    out.values.resize(out.heads * slab);

    std::vector<double> buffer(slab);
    const auto transform = [&](const Tensor3& tensor, std::vector<double>& dst) {
        for (std::size_t h = 0; h < out.heads; ++h) {
            const auto src = tensor.head(h);
            std::copy(src.begin(), src.end(), buffer.begin());
            plan.forward_block(buffer, std::span<double>(dst).subspan(h * slab, slab), out.dim);
        }
    };
    transform(layer.keys, out.keys);
    transform(layer.values, out.values);
    return out;
}

Tensor3 reconstruct_lowpass(std::span<const double> coeffs, std::size_t heads, std::size_t dim,
                            const DctPlan& plan, std::size_t bands) {
    const std::size_t seq = plan.size();
    const std::size_t slab = seq * dim;
    if (coeffs.size() != heads * slab) {
        fail(ErrorCode::shape_mismatch, "coefficient block does not match [heads, seq, dim]");
    }
    Tensor3 out(heads, seq, dim);
    std::vector<double> buffer(slab);
    for (std::size_t h = 0; h < heads; ++h) {
        plan.inverse_block(coeffs.subspan(h * slab, slab), buffer, dim, bands);
        auto dst = out.head(h);
        for (std::size_t j = 0; j < slab; ++j) {
            dst[j] = static_cast<float>(buffer[j]);
        }
    }
    return out;
}

} // namespace spectrakv
