#pragma once

#include <cstdint>
#include <cstring>
#include <string>

#include "lingo/matrix.hpp"

namespace lingo {

// FNV-1a over raw bytes; used for parameter immutability checks
// (frozen encoder, untouched embedding tables).
inline std::uint64_t fnv1a64(const void* bytes, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const unsigned char* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

template <typename T>
std::uint64_t hash_matrix(const Matrix<T>& m, std::uint64_t h = 0xcbf29ce484222325ULL) {
    h = fnv1a64(&m.rows, sizeof(m.rows), h);
    h = fnv1a64(&m.cols, sizeof(m.cols), h);
    return fnv1a64(m.data.data(), m.data.size() * sizeof(T), h);
}

inline std::string hash_hex(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return s;
}

}  // namespace lingo
