// Copyright 2026 The spectrakv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace spectrakv {

enum class DType : std::uint8_t { f32 = 0, f16 = 1 };

std::size_t bytes_per_element(DType dtype) noexcept;

enum class TokenTag : std::uint8_t { text = 0, vision = 1 };

/**
 * Dense [heads, seq, dim] tensor of 32-bit activations.
 *
 * Each head is stored as its own contiguous [seq, dim] slab so that
 * appending a position costs O(heads * dim) instead of a full reshuffle.
 */
class Tensor3 {
public:
    Tensor3() = default;
    Tensor3(std::size_t heads, std::size_t seq, std::size_t dim, float fill = 0.0f);

    std::size_t heads() const noexcept { return m_heads; }
    std::size_t seq() const noexcept { return m_seq; }
    std::size_t dim() const noexcept { return m_dim; }
    std::size_t size() const noexcept { return m_heads * m_seq * m_dim; }

    float& at(std::size_t h, std::size_t n, std::size_t d) { return m_slabs[h][n * m_dim + d]; }
    float at(std::size_t h, std::size_t n, std::size_t d) const { return m_slabs[h][n * m_dim + d]; }

    /// Row-major [seq, dim] view of one head.
    std::span<float> head(std::size_t h) { return m_slabs[h]; }
    std::span<const float> head(std::size_t h) const { return m_slabs[h]; }

    std::span<float> row(std::size_t h, std::size_t n) { return head(h).subspan(n * m_dim, m_dim); }
    std::span<const float> row(std::size_t h, std::size_t n) const {
        return head(h).subspan(n * m_dim, m_dim);
    }

    /// Appends one position; `values` is [heads, dim] row-major.
    void append_position(std::span<const float> values);

    /// New tensor holding the listed positions, in the order given.
    Tensor3 gather(std::span<const std::size_t> positions) const;

    bool same_shape(const Tensor3& other) const noexcept {
        return m_heads == other.m_heads && m_seq == other.m_seq && m_dim == other.m_dim;
    }

    friend bool operator==(const Tensor3&, const Tensor3&) = default;

private:
    std::size_t m_heads = 0;
    std::size_t m_seq = 0;
    std::size_t m_dim = 0;
    std::vector<std::vector<float>> m_slabs;
};

/// Keys and values of one decoder layer.
struct LayerKv {
    Tensor3 keys;
    Tensor3 values;
    std::size_t layer_index = 0;

    std::size_t heads() const noexcept { return keys.heads(); }
    std::size_t seq() const noexcept { return keys.seq(); }
    std::size_t dim() const noexcept { return keys.dim(); }

    friend bool operator==(const LayerKv&, const LayerKv&) = default;
};

/// Throws shape_mismatch / invalid_argument / non_finite (with coordinates).
void validate_layer(const LayerKv& layer);

} // namespace spectrakv
