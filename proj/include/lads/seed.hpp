#pragma once

#include <cstdint>
#include <string>

namespace lads {

// 64-bit noise seed. The value fully determines every noise stream drawn
// from it.
struct Seed {
    std::uint64_t value = 0;

    friend bool operator==(const Seed&, const Seed&) = default;
};

// Keyed bijective mixing permutations applied on top of the pair encoding.
// identity exists for worked examples and debugging; collapse_for_tests is
// deliberately non-injective (drops the low word) and is only constructible
// through an explicit opt-in, to let sabotage checks prove the coupling
// audit has teeth.
enum class perm_id : std::uint64_t {
    identity = 0,
    keyed_mix = 1,
    collapse_for_tests = 0xffffffffffffffffull,
};

// Seed-generator parameters: the private key and the permutation family
// member. Serialized as 32 hex chars: 8-byte key then 8-byte permutation id,
// big-endian.
class SeedSpec {
  public:
    SeedSpec(std::uint64_t key, perm_id perm, bool allow_test_permutations = false);

    static SeedSpec from_hex(const std::string& hex, bool allow_test_permutations = false);
    std::string to_hex() const;

    std::uint64_t key() const noexcept { return key_; }
    perm_id permutation() const noexcept { return perm_; }

    friend bool operator==(const SeedSpec&, const SeedSpec&) = default;

  private:
    std::uint64_t key_;
    perm_id perm_;
};

// enc(bucket, depth) = bucket * 2^32 + depth. Injective on pairs below 2^32;
// larger arguments raise domain_overflow.
std::uint64_t encode_pair(std::uint64_t bucket, std::uint64_t depth);

// Derives the per-response seed for (bucket, depth). Injective for every
// production permutation, so distinct (bucket, depth) pairs never share a
// noise stream.
Seed derive_seed(const SeedSpec& spec, std::uint64_t bucket, std::uint64_t depth);

// Applies the keyed permutation alone (exposed for injectivity scans).
std::uint64_t apply_permutation(const SeedSpec& spec, std::uint64_t x);

}  // namespace lads
