#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>

#include "cer/detail/unicode_tables.hpp"

namespace cer::unicode {

inline constexpr char32_t kInvalid = 0xFFFFFFFF;

struct Decoded {
    char32_t cp;        // kInvalid for a malformed sequence
    std::size_t length; // bytes consumed, always >= 1
};

/// Decodes one code point at `pos`. Malformed input consumes a single byte.
inline Decoded decode(std::string_view s, std::size_t pos) {
    const auto b0 = static_cast<unsigned char>(s[pos]);
    if (b0 < 0x80) return {b0, 1};
    std::size_t len;
    char32_t cp;
    char32_t min;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2, cp = b0 & 0x1F, min = 0x80;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3, cp = b0 & 0x0F, min = 0x800;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4, cp = b0 & 0x07, min = 0x10000;
    } else {
        return {kInvalid, 1};
    }
    if (pos + len > s.size()) return {kInvalid, 1};
    for (std::size_t i = 1; i < len; ++i) {
        const auto b = static_cast<unsigned char>(s[pos + i]);
        if ((b & 0xC0) != 0x80) return {kInvalid, 1};
        cp = (cp << 6) | (b & 0x3F);
    }
    if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return {kInvalid, 1};
    return {cp, len};
}

inline void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

/// True for code points in general categories L* and N*.
inline bool is_alnum(char32_t cp) {
    if (cp < 0x80) return (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
    if (cp == kInvalid) return false;
    const auto& table = detail::kAlnumRanges;
    auto it = std::upper_bound(table.begin(), table.end(), cp,
                               [](char32_t v, const detail::CodePointRange& r) { return v < r.first; });
    if (it == table.begin()) return false;
    --it;
    return cp <= it->last;
}

/// Simple (one-to-one) lowercase mapping.
inline char32_t to_lower(char32_t cp) {
    if (cp < 0x80) return (cp >= 'A' && cp <= 'Z') ? cp + 32 : cp;
    const auto& table = detail::kLowerMap;
    auto it = std::lower_bound(table.begin(), table.end(), cp,
                               [](const detail::CaseMapping& m, char32_t v) { return m.from < v; });
    return (it != table.end() && it->from == cp) ? it->to : cp;
}

/// Lowercases a UTF-8 string; malformed bytes are copied through unchanged.
inline std::string fold_case(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t pos = 0; pos < s.size();) {
        const Decoded d = decode(s, pos);
        if (d.cp == kInvalid) {
            out.push_back(s[pos]);
        } else {
            append_utf8(out, to_lower(d.cp));
        }
        pos += d.length;
    }
    return out;
}

}  // namespace cer::unicode
