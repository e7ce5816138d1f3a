#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <string>
#include <string_view>

#include "cfaug/error.hpp"

namespace cfaug {

// 64-bit FNV-1a. Used for config hashes and for deriving rng streams
// from structured keys; must stay stable across platforms.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ull) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= static_cast<std::uint64_t>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string to_hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

namespace detail {
inline const std::array<std::uint32_t, 256>& crc32_table() {
    static const std::array<std::uint32_t, 256> table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    return table;
}
}  // namespace detail

// Standard CRC-32 (IEEE 802.3), as used by zip/png.
inline std::uint32_t crc32(std::string_view bytes, std::uint32_t crc = 0) {
    const auto& table = detail::crc32_table();
    crc ^= 0xffffffffu;
    for (unsigned char c : bytes) crc = table[(crc ^ c) & 0xffu] ^ (crc >> 8);
    return crc ^ 0xffffffffu;
}

inline std::uint32_t crc32_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file for checksum: " + path);
    std::uint32_t crc = 0;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        std::streamsize got = in.gcount();
        if (got > 0) crc = crc32(std::string_view(buf, static_cast<size_t>(got)), crc);
    }
    return crc;
}

inline std::string to_hex32(std::uint32_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(8, '0');
    for (int i = 7; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

}  // namespace cfaug
