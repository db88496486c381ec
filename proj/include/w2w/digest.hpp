#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace w2w {

/// 64-bit FNV-1a. Used for layout hashes, cache keys and provenance digests;
/// not a cryptographic hash.
inline std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a64(s.data(), s.size(), h);
}

inline std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[std::size_t(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

inline std::string digest_hex(const std::string& s) { return to_hex(fnv1a64(s)); }

inline std::string digest_hex(const std::vector<float>& v) {
    return to_hex(fnv1a64(v.data(), v.size() * sizeof(float)));
}

}  // namespace w2w
