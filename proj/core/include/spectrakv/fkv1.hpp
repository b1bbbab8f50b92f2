// Copyright 2026 The spectrakv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "spectrakv/cache.hpp"

namespace spectrakv {

/*
 * FKV1 layout (all integers little-endian):
 *
 *   offset  size  field
 *   0       4     magic "FKV1"
 *   4       4     version (u32) = 1
 *   8       4     num_layers (u32)
 *   12      4     kv_heads (u32)
 *   16      4     head_dim (u32)
 *   20      8     seq_len (u64)
 *   28      1     dtype (u8): 0 = f32, 1 = f16
 *   29      7     reserved, zero
 *   36      ...   token_tags: seq_len bytes (0 = text, 1 = vision)
 *                 then for each layer: K then V, [head][position][channel]
 */
struct Fkv1Header {
    static constexpr std::size_t kSize = 36;
    static constexpr std::uint32_t kVersion = 1;

    std::uint32_t num_layers = 0;
    std::uint32_t kv_heads = 0;
    std::uint32_t head_dim = 0;
    std::uint64_t seq_len = 0;
    DType dtype = DType::f32;

    /// Total file size implied by the header.
    std::uint64_t expected_file_size() const;
};

/// IEEE 754 binary16 conversions; float_to_half rounds to nearest even.
float half_to_float(std::uint16_t bits) noexcept;
std::uint16_t float_to_half(float value) noexcept;

Fkv1Header parse_header(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_dump(const KvDump& dump);

/// Decodes exactly one record; trailing bytes are a size_mismatch error.
KvDump decode_dump(std::span<const std::uint8_t> bytes);

KvDump read_dump(const std::filesystem::path& path);
void write_dump(const KvDump& dump, const std::filesystem::path& path);

/**
 * A compressed cache has one length per layer, which a single FKV1 record
 * cannot express. It is stored as a concatenation of single-layer FKV1
 * records, in layer order, each carrying that layer's retained token tags.
 */
void write_compressed(const CompressedCache& cache, DType dtype, const std::filesystem::path& path);
std::vector<KvDump> read_compressed(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

} // namespace spectrakv
