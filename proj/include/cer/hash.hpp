#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace cer {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

/// FNV-1a over raw bytes, continuing from `state`.
constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state = kFnvOffset) {
    for (unsigned char c : bytes) {
        state ^= c;
        state *= kFnvPrime;
    }
    return state;
}

inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t state = kFnvOffset) {
    for (std::uint8_t c : bytes) {
        state ^= c;
        state *= kFnvPrime;
    }
    return state;
}

/// Feeds a u64 little-endian into an FNV-1a state.
constexpr std::uint64_t fnv1a64_u64(std::uint64_t value, std::uint64_t state) {
    for (int i = 0; i < 8; ++i) {
        state ^= (value >> (8 * i)) & 0xffU;
        state *= kFnvPrime;
    }
    return state;
}

/// SplitMix64 finalizer; spreads FNV output over all bits.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

}  // namespace cer
