// Copyright 2026 The spectrakv Authors
// SPDX-License-Identifier: Apache-2.0

#include "spectrakv/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spectrakv/error.hpp"

namespace spectrakv {

std::size_t bytes_per_element(DType dtype) noexcept {
    return dtype == DType::f16 ? 2 : 4;
}

Tensor3::Tensor3(std::size_t heads, std::size_t seq, std::size_t dim, float fill)
    : m_heads(heads), m_seq(seq), m_dim(dim), m_slabs(heads, std::vector<float>(seq * dim, fill)) {}

void Tensor3::append_position(std::span<const float> values) {
    if (values.size() != m_heads * m_dim) {
        fail(ErrorCode::shape_mismatch, "append expects " + std::to_string(m_heads * m_dim) +
                                            " values ([heads, dim]), got " + std::to_string(values.size()));
    }
    for (std::size_t h = 0; h < m_heads; ++h) {
        const auto src = values.subspan(h * m_dim, m_dim);
        m_slabs[h].insert(m_slabs[h].end(), src.begin(), src.end());
    }
    ++m_seq;
}

Tensor3 Tensor3::gather(std::span<const std::size_t> positions) const {
    Tensor3 out(m_heads, positions.size(), m_dim);
    for (std::size_t h = 0; h < m_heads; ++h) {
        for (std::size_t j = 0; j < positions.size(); ++j) {
            if (positions[j] >= m_seq) {
                fail(ErrorCode::invalid_argument,
                     "gather position " + std::to_string(positions[j]) + " out of range " + std::to_string(m_seq));
            }
            const auto src = row(h, positions[j]);
            std::copy(src.begin(), src.end(), out.row(h, j).begin());
        }
    }
    return out;
}

namespace {

void check_finite(const Tensor3& t, const char* name, std::size_t layer) {
    for (std::size_t h = 0; h < t.heads(); ++h) {
        for (std::size_t n = 0; n < t.seq(); ++n) {
            for (std::size_t d = 0; d < t.dim(); ++d) {
                if (!std::isfinite(t.at(h, n, d))) {
                    fail(ErrorCode::non_finite, std::string("non-finite ") + name + " entry at layer " +
                                                    std::to_string(layer) + " head " + std::to_string(h) +
                                                    " position " + std::to_string(n) + " channel " +
                                                    std::to_string(d));
                }
            }
        }
    }
}

} // namespace

void validate_layer(const LayerKv& layer) {
    if (!layer.keys.same_shape(layer.values)) {
        fail(ErrorCode::shape_mismatch,
             "layer " + std::to_string(layer.layer_index) + ": keys and values differ in shape");
    }
    if (layer.heads() == 0 || layer.seq() == 0 || layer.dim() == 0) {
        fail(ErrorCode::invalid_argument,
             "layer " + std::to_string(layer.layer_index) + ": heads, seq and dim must all be >= 1");
    }
    check_finite(layer.keys, "key", layer.layer_index);
    check_finite(layer.values, "value", layer.layer_index);
}

} // namespace spectrakv
