#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "lads/bucket_model.hpp"
#include "lads/noise.hpp"
#include "lads/seed.hpp"

namespace lads {

using AccountId = std::string;

// Per-account, per-stage request counters. counts[i] is the number of this
// account's served requests that hashed to bucket i in the current stage.
struct AccountLedger {
    std::map<BucketId, std::uint32_t> counts;
    std::uint64_t total_requests = 0;
};

enum class GatewayMode { simple, conditional };

struct GatewayConfig {
    GatewayMode mode = GatewayMode::simple;
    SeedSpec seed_spec{0, perm_id::keyed_mix};
    std::size_t noise_dim = 1;
    double alpha = 1.0;
    // Per-account request cap per stage; 0 means unlimited.
    std::uint64_t stage_cap = 0;
    std::optional<BucketModel> bucket_model;  // required in conditional mode
    // Domain key for the private (fresh) noise stream.
    std::uint64_t fresh_key = 0;

    // Throws config_invalid when the fields are inconsistent.
    void validate() const;
};

struct ServeResult {
    BucketId bucket = 0;
    std::uint32_t depth = 0;
    Seed seed;
    NoiseVector noise;
};

// Stateful request path. Accounts are auto-created on first request.
// Ledger mutation happens under one lock; noise generation (the expensive
// part) runs outside it, so requests from different accounts overlap.
class Gateway {
  public:
    explicit Gateway(GatewayConfig cfg);

    // Moving steals state but not synchronization primitives; the source
    // must not be serving concurrently.
    Gateway(Gateway&& other) noexcept
        : cfg_(std::move(other.cfg_)),
          ledgers_(std::move(other.ledgers_)),
          stage_id_(other.stage_id_),
          fresh_counter_(other.fresh_counter_.load()) {}
    Gateway& operator=(Gateway&&) = delete;

    ServeResult serve_simple(const AccountId& account);
    ServeResult serve_conditional(const AccountId& account, const QueryEmbedding& q);

    // Clears every ledger and bumps the stage id; seeds then restart at
    // depth 1. The private noise stream keeps advancing across stages.
    std::uint64_t reset_stage();

    std::uint64_t stage_id() const;
    GatewayMode mode() const noexcept { return cfg_.mode; }
    double alpha() const noexcept { return cfg_.alpha; }
    std::size_t noise_dim() const noexcept { return cfg_.noise_dim; }
    const SeedSpec& seed_spec() const noexcept { return cfg_.seed_spec; }
    const std::optional<BucketModel>& bucket_model() const noexcept { return cfg_.bucket_model; }
    AccountLedger ledger_copy(const AccountId& account) const;

    // Point-in-time consistent binary snapshot (versioned, checksummed).
    std::vector<std::uint8_t> snapshot() const;
    void write_snapshot(const std::string& path) const;
    // Rebuilds a gateway from snapshot bytes. A conditional-mode snapshot
    // needs the bucket model it was taken under (verified by fingerprint).
    static Gateway restore(const std::vector<std::uint8_t>& bytes,
                           std::optional<BucketModel> model = std::nullopt);
    static Gateway restore_file(const std::string& path,
                                std::optional<BucketModel> model = std::nullopt);

  private:
    ServeResult finish_serve(BucketId bucket, std::uint32_t depth);

    GatewayConfig cfg_;
    mutable std::mutex mu_;
    std::map<AccountId, AccountLedger> ledgers_;
    std::uint64_t stage_id_ = 1;
    std::atomic<std::uint64_t> fresh_counter_{0};
};

}  // namespace lads
