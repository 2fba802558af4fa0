#include "lads/seed.hpp"

#include <cctype>

#include "lads/error.hpp"

namespace lads {
namespace {

bool known_perm(perm_id p) {
    return p == perm_id::identity || p == perm_id::keyed_mix || p == perm_id::collapse_for_tests;
}

std::uint64_t parse_hex_u64(const std::string& hex, std::size_t off) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < 16; ++i) {
        char c = hex[off + i];
        int d;
        if (c >= '0' && c <= '9') d = c - '0';
        else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
        else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
        else throw error(errc::invalid_argument, "seed spec hex contains a non-hex character");
        v = (v << 4) | static_cast<std::uint64_t>(d);
    }
    return v;
}

void append_hex_u64(std::string& out, std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    for (int shift = 60; shift >= 0; shift -= 4) out.push_back(digits[(v >> shift) & 0xf]);
}

// splitmix64 finalizer: three xorshift-multiply steps, each bijective.
std::uint64_t mix64(std::uint64_t x) {
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

}  // namespace

SeedSpec::SeedSpec(std::uint64_t key, perm_id perm, bool allow_test_permutations)
    : key_(key), perm_(perm) {
    if (!known_perm(perm))
        throw error(errc::unknown_permutation, "unknown seed permutation id");
    if (perm == perm_id::collapse_for_tests && !allow_test_permutations)
        throw error(errc::unknown_permutation,
                    "non-injective test permutation requires explicit opt-in");
}

SeedSpec SeedSpec::from_hex(const std::string& hex, bool allow_test_permutations) {
    if (hex.size() != 32)
        throw error(errc::invalid_argument, "seed spec hex must be exactly 32 characters");
    std::uint64_t key = parse_hex_u64(hex, 0);
    std::uint64_t perm = parse_hex_u64(hex, 16);
    return SeedSpec(key, static_cast<perm_id>(perm), allow_test_permutations);
}

std::string SeedSpec::to_hex() const {
    std::string out;
    out.reserve(32);
    append_hex_u64(out, key_);
    append_hex_u64(out, static_cast<std::uint64_t>(perm_));
    return out;
}

std::uint64_t encode_pair(std::uint64_t bucket, std::uint64_t depth) {
    if (bucket >= (1ull << 32) || depth >= (1ull << 32))
        throw error(errc::domain_overflow, "bucket or depth exceeds 2^32 - 1");
    return (bucket << 32) | depth;
}

std::uint64_t apply_permutation(const SeedSpec& spec, std::uint64_t x) {
    switch (spec.permutation()) {
    case perm_id::identity:
        return x;
    case perm_id::keyed_mix:
        return mix64(x + spec.key()) ^ ((spec.key() << 32) | (spec.key() >> 32));
    case perm_id::collapse_for_tests:
        return mix64((x >> 32) ^ spec.key());
    }
    throw error(errc::unknown_permutation, "unknown seed permutation id");
}

Seed derive_seed(const SeedSpec& spec, std::uint64_t bucket, std::uint64_t depth) {
    return Seed{apply_permutation(spec, encode_pair(bucket, depth))};
}

}  // namespace lads
