// Copyright 2026 The spectrakv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "spectrakv/tensor.hpp"

namespace spectrakv {

/// Orthonormal DCT-II coefficients of one channel, indexed by frequency.
struct SpectralCoeffs {
    std::vector<float> values;

    std::size_t size() const noexcept { return values.size(); }
    friend bool operator==(const SpectralCoeffs&, const SpectralCoeffs&) = default;
};

/// Squared coefficient magnitudes. Stored in double so that the square of a
/// float coefficient is exact.
struct PowerSpectrum {
    std::vector<double> power;

    std::size_t size() const noexcept { return power.size(); }
    double total() const noexcept;
};

/// Number of low-frequency coefficients kept by the low-pass filter:
/// max(1, ceil(gamma * n)), clamped to n. A product within 1e-9 of an
/// integer is treated as that integer so 0.1 * 520 keeps 52, not 53.
std::size_t cutoff_index(std::size_t n, double gamma);

/// Rejects gamma outside [0, 1] (or NaN) with invalid_argument.
void validate_gamma(double gamma);

SpectralCoeffs dct(std::span<const float> signal);
std::vector<float> idct(const SpectralCoeffs& coeffs);
SpectralCoeffs lowpass(const SpectralCoeffs& coeffs, double gamma);
PowerSpectrum power_spectrum(const SpectralCoeffs& coeffs);

/// Complex FFT of arbitrary length: iterative radix-2 for powers of two,
/// Bluestein's chirp-z (on a power-of-two convolution) otherwise.
class Fft {
public:
    Fft() = default;
    explicit Fft(std::size_t n);

    std::size_t size() const noexcept { return m_n; }

    /// In-place forward transform, X[k] = sum x[j] exp(-2 pi i jk / n).
    void forward(std::span<std::complex<double>> data) const;
    /// In-place inverse transform including the 1/n factor.
    void inverse(std::span<std::complex<double>> data) const;

private:
    void radix2(std::span<std::complex<double>> data, bool invert) const;
    void bluestein(std::span<std::complex<double>> data) const;

    std::size_t m_n = 0;
    bool m_pow2 = true;
    std::vector<std::complex<double>> m_roots;   // radix-2 twiddles for m_conv_n (or m_n)
    std::vector<std::size_t> m_bitrev;
    std::size_t m_conv_n = 0;                    // Bluestein convolution length
    std::vector<std::complex<double>> m_chirp;   // exp(-i pi k^2 / n)
    std::vector<std::complex<double>> m_kernel;  // FFT of the conjugate chirp, padded
};

/**
 * Precomputed orthonormal DCT-II / DCT-III (inverse) of one length.
 *
 * Lengths up to kDirectMaxLength use the dense basis matrix; longer ones use
 * Makhoul's reordering onto a single complex FFT of the same length. A plan
 * is immutable once built and may be shared across threads.
 */
class DctPlan {
public:
    static constexpr std::size_t kDirectMaxLength = 64;

    enum class Strategy { automatic, direct, fft };

    explicit DctPlan(std::size_t n, Strategy strategy = Strategy::automatic);

    std::size_t size() const noexcept { return m_n; }
    bool uses_fft() const noexcept { return m_use_fft; }

    void forward(std::span<const double> signal, std::span<double> coeffs) const;
    void inverse(std::span<const double> coeffs, std::span<double> signal) const;

    /// Transforms every column of a row-major [n, width] block.
    void forward_block(std::span<const double> block, std::span<double> out, std::size_t width) const;

    /// Inverse transform of every column, reading only the first `bands`
    /// coefficient rows (the rest are taken as zero).
    void inverse_block(std::span<const double> coeffs, std::span<double> out, std::size_t width,
                       std::size_t bands) const;

private:
    std::size_t m_n;
    bool m_use_fft = false;
    std::vector<double> m_basis;                 // [m][i] = alpha[m] cos(pi m (i + 1/2) / n)
    Fft m_fft;
    std::vector<std::complex<double>> m_twiddle; // exp(-i pi k / 2n)
    std::vector<double> m_alpha;
};

/// DCT coefficients of every (head, channel) column of one layer, laid out
/// [head][frequency][channel] to mirror the tensor layout.
struct LayerSpectrum {
    std::size_t heads = 0;
    std::size_t seq = 0;
    std::size_t dim = 0;
    std::vector<double> keys;
    std::vector<double> values;

    std::size_t offset(std::size_t h, std::size_t m, std::size_t d) const noexcept {
        return (h * seq + m) * dim + d;
    }
};

LayerSpectrum compute_layer_spectrum(const LayerKv& layer, const DctPlan& plan);

/// Low-passed reconstruction of one tensor from its coefficients.
Tensor3 reconstruct_lowpass(std::span<const double> coeffs, std::size_t heads, std::size_t dim,
                            const DctPlan& plan, std::size_t bands);

} // namespace spectrakv
