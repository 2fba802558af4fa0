#pragma once

#include <array>
#include <cstdint>

namespace lads {

// Philox4x64-10 counter-based block cipher. Stateless: callers own the
// counter layout. Constants are the Random123 originals; outputs verified
// against an independent reference implementation (see tests for the
// known-answer vectors).
namespace philox {

inline constexpr std::uint64_t kMul0 = 0xD2E7470EE14C6C93ull;
inline constexpr std::uint64_t kMul1 = 0xCA5A826395121157ull;
inline constexpr std::uint64_t kWeyl0 = 0x9E3779B97F4A7C15ull;
inline constexpr std::uint64_t kWeyl1 = 0xBB67AE8584CAA73Bull;

using block = std::array<std::uint64_t, 4>;
using key = std::array<std::uint64_t, 2>;

constexpr void mulhilo(std::uint64_t a, std::uint64_t b, std::uint64_t& hi, std::uint64_t& lo) {
    unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
    hi = static_cast<std::uint64_t>(p >> 64);
    lo = static_cast<std::uint64_t>(p);
}

constexpr block round(const block& c, const key& k) {
    std::uint64_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, c[0], hi0, lo0);
    mulhilo(kMul1, c[2], hi1, lo1);
    return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

constexpr block encrypt(block ctr, key k) {
    ctr = round(ctr, k);
    for (int i = 0; i < 9; ++i) {
        k[0] += kWeyl0;
        k[1] += kWeyl1;
        ctr = round(ctr, k);
    }
    return ctr;
}

}  // namespace philox

// Maps a raw 64-bit word to the open interval (0, 1). Uses the top 52 bits
// plus a half-ulp offset so every result is an exact double in
// [2^-53, 1 - 2^-53]; neither endpoint of (0, 1) is reachable.
constexpr double open_unit(std::uint64_t w) {
    return (static_cast<double>(w >> 12) + 0.5) * 0x1p-52;
}

}  // namespace lads
