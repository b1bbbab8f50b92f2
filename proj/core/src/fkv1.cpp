// Copyright 2026 The spectrakv Authors
// SPDX-License-Identifier: Apache-2.0

#include "spectrakv/fkv1.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>

#include "spectrakv/error.hpp"

namespace spectrakv {

namespace {

constexpr std::uint8_t kMagic[4] = {'F', 'K', 'V', '1'};

template <typename T>
T load_le(const std::uint8_t* p) {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        v |= static_cast<T>(static_cast<T>(p[i]) << (8 * i));
    }
    return v;
}

template <typename T>
void store_le(std::vector<std::uint8_t>& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFFU));
    }
}

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
    if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) {
        fail(ErrorCode::malformed_header, "FKV1 header geometry overflows 64-bit sizes");
    }
    return a * b;
}

void encode_tensor(std::vector<std::uint8_t>& out, const Tensor3& t, DType dtype) {
    for (std::size_t h = 0; h < t.heads(); ++h) {
        for (const float v : t.head(h)) {
            if (dtype == DType::f16) {
                store_le<std::uint16_t>(out, float_to_half(v));
            } else {
                store_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
            }
        }
    }
}

const std::uint8_t* decode_tensor(const std::uint8_t* p, Tensor3& t, DType dtype) {
    for (std::size_t h = 0; h < t.heads(); ++h) {
        for (float& v : t.head(h)) {
            if (dtype == DType::f16) {
                v = half_to_float(load_le<std::uint16_t>(p));
                p += 2;
            } else {
                v = std::bit_cast<float>(load_le<std::uint32_t>(p));
                p += 4;
            }
        }
    }
    return p;
}

std::vector<std::uint8_t> encode_record(std::span<const LayerKv> layers, std::span<const TokenTag> tags,
                                        DType dtype) {
    const std::size_t heads = layers.front().heads();
    const std::size_t dim = layers.front().dim();
    const std::size_t seq = layers.front().seq();
    const auto fits_u32 = [](std::size_t v) { return v <= std::numeric_limits<std::uint32_t>::max(); };
    if (!fits_u32(layers.size()) || !fits_u32(heads) || !fits_u32(dim)) {
        fail(ErrorCode::invalid_argument, "FKV1: layer/head/dim counts must fit in 32 bits");
    }
    for (const auto& layer : layers) {
        if (!layer.keys.same_shape(layers.front().keys) || !layer.values.same_shape(layers.front().keys)) {
            fail(ErrorCode::shape_mismatch, "FKV1: every layer must share [heads, seq, dim]");
        }
    }
    if (tags.size() != seq) {
        fail(ErrorCode::shape_mismatch, "FKV1: token_tags length must equal seq_len");
    }

    std::vector<std::uint8_t> out;
    out.reserve(Fkv1Header::kSize + seq + 2 * layers.size() * heads * seq * dim * bytes_per_element(dtype));
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    store_le<std::uint32_t>(out, Fkv1Header::kVersion);
    store_le<std::uint32_t>(out, static_cast<std::uint32_t>(layers.size()));
    store_le<std::uint32_t>(out, static_cast<std::uint32_t>(heads));
    store_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim));
    store_le<std::uint64_t>(out, seq);
    out.push_back(static_cast<std::uint8_t>(dtype));
    out.insert(out.end(), 7, 0);
    for (const TokenTag tag : tags) {
        out.push_back(static_cast<std::uint8_t>(tag));
    }
    for (const auto& layer : layers) {
        encode_tensor(out, layer.keys, dtype);
        encode_tensor(out, layer.values, dtype);
    }
    return out;
}

} // namespace

float half_to_float(std::uint16_t bits) noexcept {
    const std::uint32_t sign = static_cast<std::uint32_t>(bits & 0x8000U) << 16;
    const std::uint32_t exponent = (bits >> 10) & 0x1FU;
    std::uint32_t mantissa = bits & 0x3FFU;
    std::uint32_t out;
    if (exponent == 0) {
        if (mantissa == 0) {
            out = sign;
        } else {
            // subnormal: renormalize
            int shift = 0;
            while ((mantissa & 0x400U) == 0) {
                mantissa <<= 1;
                ++shift;
            }
            mantissa &= 0x3FFU;
            out = sign | static_cast<std::uint32_t>(127 - 15 - shift + 1) << 23 | (mantissa << 13);
        }
    } else if (exponent == 0x1F) {
        out = sign | 0x7F800000U | (mantissa << 13);
    } else {
        out = sign | ((exponent + 127 - 15) << 23) | (mantissa << 13);
    }
    return std::bit_cast<float>(out);
}

std::uint16_t float_to_half(float value) noexcept {
    const std::uint32_t f = std::bit_cast<std::uint32_t>(value);
    const std::uint16_t sign = static_cast<std::uint16_t>((f >> 16) & 0x8000U);
    const std::uint32_t exponent = (f >> 23) & 0xFFU;
    std::uint32_t mantissa = f & 0x7FFFFFU;

    if (exponent == 0xFF) {
        // Inf stays Inf; NaN keeps a quiet bit so it never collapses to Inf
        return static_cast<std::uint16_t>(sign | 0x7C00U | (mantissa ? 0x200U | (mantissa >> 13) : 0U));
    }
    const int unbiased = static_cast<int>(exponent) - 127;
    if (unbiased > 15) {
        return static_cast<std::uint16_t>(sign | 0x7C00U);
    }
    if (unbiased >= -14) {
        std::uint32_t half = (static_cast<std::uint32_t>(unbiased + 15) << 10) | (mantissa >> 13);
        const std::uint32_t rest = mantissa & 0x1FFFU;
        if (rest > 0x1000U || (rest == 0x1000U && (half & 1U))) {
            ++half; // may carry into the exponent, which is the correct rounding
        }
        return static_cast<std::uint16_t>(sign | half);
    }
    if (unbiased < -25) {
        return sign;
    }
    // subnormal half
    mantissa |= 0x800000U;
    const int shift = -unbiased - 14 + 13;
    std::uint32_t half = mantissa >> shift;
    const std::uint32_t rest = mantissa & ((1U << shift) - 1U);
    const std::uint32_t midpoint = 1U << (shift - 1);
    if (rest > midpoint || (rest == midpoint && (half & 1U))) {
        ++half;
    }
    return static_cast<std::uint16_t>(sign | half);
}

std::uint64_t Fkv1Header::expected_file_size() const {
    const std::uint64_t per_tensor = checked_mul(checked_mul(checked_mul(kv_heads, seq_len), head_dim),
                                                 bytes_per_element(dtype));
    const std::uint64_t payload = checked_mul(checked_mul(per_tensor, 2), num_layers);
    const std::uint64_t prefix = kSize + seq_len;
    if (payload > std::numeric_limits<std::uint64_t>::max() - prefix) {
        fail(ErrorCode::malformed_header, "FKV1 header geometry overflows 64-bit sizes");
    }
    return prefix + payload;
}

Fkv1Header parse_header(std::span<const std::uint8_t> bytes) {
    if (bytes.size() >= 4 && !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
        fail(ErrorCode::bad_magic, "not an FKV1 file (bad magic)");
    }
    if (bytes.size() < Fkv1Header::kSize) {
        fail(ErrorCode::truncated_payload, "truncated header: expected " + std::to_string(Fkv1Header::kSize) +
                                               " bytes, got " + std::to_string(bytes.size()));
    }
    const std::uint8_t* p = bytes.data();
    const auto version = load_le<std::uint32_t>(p + 4);
    if (version != Fkv1Header::kVersion) {
        fail(ErrorCode::version_mismatch, "unsupported FKV1 version " + std::to_string(version));
    }
    Fkv1Header h;
    h.num_layers = load_le<std::uint32_t>(p + 8);
    h.kv_heads = load_le<std::uint32_t>(p + 12);
    h.head_dim = load_le<std::uint32_t>(p + 16);
    h.seq_len = load_le<std::uint64_t>(p + 20);
    const std::uint8_t dtype = p[28];
    if (dtype > 1) {
        fail(ErrorCode::malformed_header, "unknown dtype code " + std::to_string(dtype));
    }
    h.dtype = static_cast<DType>(dtype);
    for (std::size_t i = 29; i < Fkv1Header::kSize; ++i) {
        if (p[i] != 0) {
            fail(ErrorCode::malformed_header, "reserved header byte " + std::to_string(i) + " is not zero");
        }
    }
    if (h.num_layers == 0 || h.kv_heads == 0 || h.head_dim == 0) {
        fail(ErrorCode::malformed_header, "num_layers, kv_heads and head_dim must be >= 1");
    }
    return h;
}

std::vector<std::uint8_t> encode_dump(const KvDump& dump) {
    if (dump.layers.empty()) {
        fail(ErrorCode::invalid_argument, "FKV1: dump has no layers");
    }
    return encode_record(dump.layers, dump.token_tags, dump.dtype);
}

KvDump decode_dump(std::span<const std::uint8_t> bytes) {
    const Fkv1Header h = parse_header(bytes);
    const std::uint64_t expected = h.expected_file_size();
    if (bytes.size() < expected) {
        fail(ErrorCode::truncated_payload, "truncated payload: expected " + std::to_string(expected) +
                                               " bytes, got " + std::to_string(bytes.size()));
    }
    if (bytes.size() > expected) {
        fail(ErrorCode::size_mismatch, "size mismatch: header implies " + std::to_string(expected) +
                                           " bytes, file has " + std::to_string(bytes.size()));
    }
    KvDump dump;
    dump.dtype = h.dtype;
    const std::uint8_t* p = bytes.data() + Fkv1Header::kSize;
    dump.token_tags.resize(h.seq_len);
    for (std::uint64_t i = 0; i < h.seq_len; ++i) {
        if (p[i] > 1) {
            fail(ErrorCode::malformed_payload, "token tag at position " + std::to_string(i) + " is " +
                                                   std::to_string(p[i]) + " (expected 0 or 1)");
        }
        dump.token_tags[i] = static_cast<TokenTag>(p[i]);
    }
    p += h.seq_len;
    dump.layers.reserve(h.num_layers);
    for (std::uint32_t l = 0; l < h.num_layers; ++l) {
        LayerKv layer{Tensor3(h.kv_heads, h.seq_len, h.head_dim), Tensor3(h.kv_heads, h.seq_len, h.head_dim), l};
        p = decode_tensor(p, layer.keys, h.dtype);
        p = decode_tensor(p, layer.values, h.dtype);
        dump.layers.push_back(std::move(layer));
    }
    return dump;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorCode::io_error, "cannot open '" + path.string() + "' for reading");
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) {
        fail(ErrorCode::io_error, "failed reading '" + path.string() + "'");
    }
    return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        fail(ErrorCode::io_error, "cannot open '" + path.string() + "' for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        fail(ErrorCode::io_error, "failed writing '" + path.string() + "'");
    }
}

KvDump read_dump(const std::filesystem::path& path) {
    return decode_dump(read_file(path));
}

void write_dump(const KvDump& dump, const std::filesystem::path& path) {
    write_file(path, encode_dump(dump));
}

void write_compressed(const CompressedCache& cache, DType dtype, const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes;
    for (std::size_t l = 0; l < cache.num_layers(); ++l) {
        const LayerKv& layer = cache.layer(l);
        const auto record = encode_record(std::span<const LayerKv>(&layer, 1), cache.token_tags(l), dtype);
        bytes.insert(bytes.end(), record.begin(), record.end());
    }
    write_file(path, bytes);
}

std::vector<KvDump> read_compressed(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    std::vector<KvDump> records;
    std::size_t offset = 0;
    while (offset < bytes.size()) {
        const auto rest = std::span<const std::uint8_t>(bytes).subspan(offset);
        const Fkv1Header h = parse_header(rest);
        const std::uint64_t size = h.expected_file_size();
        if (size > rest.size()) {
            fail(ErrorCode::truncated_payload, "record " + std::to_string(records.size()) + " truncated: expected " +
                                                   std::to_string(size) + " bytes, got " + std::to_string(rest.size()));
        }
        records.push_back(decode_dump(rest.first(size)));
        records.back().layers.front().layer_index = records.size() - 1;
        offset += size;
    }
    return records;
}

} // namespace spectrakv
