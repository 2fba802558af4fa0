#include "lads/gateway.hpp"

#include <cstring>
#include <fstream>

#include "lads/error.hpp"
#include "lads/philox.hpp"

namespace lads {
namespace {

constexpr char kMagic[8] = {'L', 'A', 'D', 'S', 'S', 'N', 'P', '1'};
constexpr std::uint32_t kSnapshotVersion = 1;
// Key lane separating the private noise stream from seed-derived streams.
constexpr std::uint64_t kFreshDomain = 0x4652455348ull;

std::uint32_t crc32(const std::uint8_t* data, std::size_t len) {
    static std::uint32_t table[256];
    static bool init = false;
    if (!init) {
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            table[i] = c;
        }
        init = true;
    }
    std::uint32_t c = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xFF] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

class Reader {
  public:
    Reader(const std::uint8_t* data, std::size_t len) : data_(data), len_(len) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    double f64() {
        std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
        pos_ += n;
        return s;
    }
    std::uint8_t u8() {
        need(1);
        return data_[pos_++];
    }
    bool done() const { return pos_ == len_; }

  private:
    void need(std::size_t n) {
        if (pos_ + n > len_)
            throw error(errc::corrupt_snapshot, "snapshot payload truncated");
    }
    const std::uint8_t* data_;
    std::size_t len_;
    std::size_t pos_ = 0;
};

void check_account(const AccountId& account) {
    if (account.empty() || account.size() > 128)
        throw error(errc::invalid_account, "account id must be 1..128 bytes");
}

}  // namespace

void GatewayConfig::validate() const {
    if (noise_dim == 0)
        throw error(errc::config_invalid, "noise_dim must be positive");
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw error(errc::config_invalid, "alpha must lie in [0, 1]");
    if (mode == GatewayMode::conditional && !bucket_model)
        throw error(errc::config_invalid, "conditional mode needs a bucket model");
}

Gateway::Gateway(GatewayConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

ServeResult Gateway::finish_serve(BucketId bucket, std::uint32_t depth) {
    ServeResult r;
    r.bucket = bucket;
    r.depth = depth;
    r.seed = derive_seed(cfg_.seed_spec, bucket, depth);
    if (cfg_.alpha == 1.0) {
        // Fully shared: bit-identical for equal (bucket, depth), and the
        // private stream is left untouched.
        r.noise = gaussian_noise(r.seed, cfg_.noise_dim);
        return r;
    }
    std::uint64_t idx = fresh_counter_.fetch_add(1, std::memory_order_relaxed);
    Seed fresh_seed{philox::encrypt({idx, 0, 0, 0}, {cfg_.fresh_key, kFreshDomain})[0]};
    NoiseVector fresh = gaussian_noise(fresh_seed, cfg_.noise_dim);
    if (cfg_.alpha == 0.0) {
        r.noise = std::move(fresh);
        return r;
    }
    NoiseVector shared = gaussian_noise(r.seed, cfg_.noise_dim);
    r.noise = mix_noise(shared, fresh, MixingCoefficient{cfg_.alpha});
    return r;
}

ServeResult Gateway::serve_simple(const AccountId& account) {
    if (cfg_.mode != GatewayMode::simple)
        throw error(errc::unknown_mode, "serve_simple on a conditional-mode gateway");
    check_account(account);
    std::uint32_t depth;
    {
        std::lock_guard<std::mutex> lock(mu_);
        AccountLedger& led = ledgers_[account];
        if (cfg_.stage_cap > 0 && led.total_requests >= cfg_.stage_cap)
            throw error(errc::quota_exceeded, "account reached the per-stage request cap");
        std::uint32_t& count = led.counts[0];
        if (count == ~std::uint32_t{0})
            throw error(errc::domain_overflow, "access index would overflow");
        depth = ++count;
        ++led.total_requests;
    }
    return finish_serve(0, depth);
}

ServeResult Gateway::serve_conditional(const AccountId& account, const QueryEmbedding& q) {
    if (cfg_.mode != GatewayMode::conditional)
        throw error(errc::unknown_mode, "serve_conditional on a simple-mode gateway");
    check_account(account);
    // Bucket lookup is read-only on the immutable model; do it unlocked.
    BucketId bucket = assign_bucket(*cfg_.bucket_model, q);
    std::uint32_t depth;
    {
        std::lock_guard<std::mutex> lock(mu_);
        AccountLedger& led = ledgers_[account];
        if (cfg_.stage_cap > 0 && led.total_requests >= cfg_.stage_cap)
            throw error(errc::quota_exceeded, "account reached the per-stage request cap");
        std::uint32_t& count = led.counts[bucket];
        if (count == ~std::uint32_t{0})
            throw error(errc::domain_overflow, "bucket depth would overflow");
        depth = ++count;
        ++led.total_requests;
    }
    return finish_serve(bucket, depth);
}

std::uint64_t Gateway::reset_stage() {
    std::lock_guard<std::mutex> lock(mu_);
    ledgers_.clear();
    return ++stage_id_;
}

std::uint64_t Gateway::stage_id() const {
    std::lock_guard<std::mutex> lock(mu_);
    return stage_id_;
}

AccountLedger Gateway::ledger_copy(const AccountId& account) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = ledgers_.find(account);
    return it == ledgers_.end() ? AccountLedger{} : it->second;
}

std::vector<std::uint8_t> Gateway::snapshot() const {
    std::vector<std::uint8_t> payload;
    {
        std::lock_guard<std::mutex> lock(mu_);
        payload.push_back(cfg_.mode == GatewayMode::simple ? 0 : 1);
        put_u64(payload, cfg_.seed_spec.key());
        put_u64(payload, static_cast<std::uint64_t>(cfg_.seed_spec.permutation()));
        put_u64(payload, stage_id_);
        put_u32(payload, static_cast<std::uint32_t>(cfg_.noise_dim));
        put_f64(payload, cfg_.alpha);
        put_u64(payload, cfg_.stage_cap);
        put_u64(payload, cfg_.fresh_key);
        put_u64(payload, fresh_counter_.load(std::memory_order_relaxed));
        put_u64(payload, cfg_.bucket_model ? cfg_.bucket_model->fingerprint() : 0);
        put_u32(payload, static_cast<std::uint32_t>(ledgers_.size()));
        for (const auto& [id, led] : ledgers_) {
            put_u32(payload, static_cast<std::uint32_t>(id.size()));
            payload.insert(payload.end(), id.begin(), id.end());
            put_u64(payload, led.total_requests);
            put_u32(payload, static_cast<std::uint32_t>(led.counts.size()));
            for (const auto& [bucket, count] : led.counts) {
                put_u32(payload, bucket);
                put_u32(payload, count);
            }
        }
    }
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 8);
    put_u32(out, kSnapshotVersion);
    put_u64(out, payload.size());
    out.insert(out.end(), payload.begin(), payload.end());
    put_u32(out, crc32(payload.data(), payload.size()));
    return out;
}

void Gateway::write_snapshot(const std::string& path) const {
    std::vector<std::uint8_t> bytes = snapshot();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw error(errc::io_error, "cannot write snapshot: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw error(errc::io_error, "short write on snapshot: " + path);
}

Gateway Gateway::restore(const std::vector<std::uint8_t>& bytes,
                         std::optional<BucketModel> model) {
    if (bytes.size() < 8 + 4 + 8 + 4)
        throw error(errc::corrupt_snapshot, "snapshot shorter than its header");
    if (std::memcmp(bytes.data(), kMagic, 8) != 0)
        throw error(errc::corrupt_snapshot, "snapshot magic mismatch");
    Reader header(bytes.data() + 8, bytes.size() - 8);
    std::uint32_t version = header.u32();
    if (version != kSnapshotVersion)
        throw error(errc::version_mismatch,
                    "snapshot version " + std::to_string(version) + " not supported");
    std::uint64_t payload_len = header.u64();
    if (bytes.size() != 8 + 4 + 8 + payload_len + 4)
        throw error(errc::corrupt_snapshot, "snapshot length field disagrees with file size");
    const std::uint8_t* payload = bytes.data() + 20;
    Reader tail(payload + payload_len, 4);
    std::uint32_t stored_crc = tail.u32();
    if (crc32(payload, payload_len) != stored_crc)
        throw error(errc::corrupt_snapshot, "snapshot checksum mismatch");

    Reader r(payload, payload_len);
    GatewayConfig cfg;
    std::uint8_t mode = r.u8();
    if (mode > 1) throw error(errc::corrupt_snapshot, "snapshot mode byte invalid");
    cfg.mode = mode == 0 ? GatewayMode::simple : GatewayMode::conditional;
    std::uint64_t key = r.u64();
    std::uint64_t perm = r.u64();
    cfg.seed_spec = SeedSpec(key, static_cast<perm_id>(perm), true);
    std::uint64_t stage = r.u64();
    cfg.noise_dim = r.u32();
    cfg.alpha = r.f64();
    cfg.stage_cap = r.u64();
    cfg.fresh_key = r.u64();
    std::uint64_t fresh_counter = r.u64();
    std::uint64_t fp = r.u64();
    if (cfg.mode == GatewayMode::conditional) {
        if (!model)
            throw error(errc::model_mismatch,
                        "conditional snapshot needs the bucket model it was taken under");
        if (model->fingerprint() != fp)
            throw error(errc::model_mismatch, "bucket model fingerprint mismatch");
        cfg.bucket_model = std::move(model);
    }
    Gateway gw(std::move(cfg));
    gw.stage_id_ = stage;
    gw.fresh_counter_.store(fresh_counter, std::memory_order_relaxed);
    std::uint32_t n_accounts = r.u32();
    for (std::uint32_t a = 0; a < n_accounts; ++a) {
        std::uint32_t id_len = r.u32();
        if (id_len == 0 || id_len > 128)
            throw error(errc::corrupt_snapshot, "snapshot account id length invalid");
        AccountId id = r.str(id_len);
        AccountLedger led;
        led.total_requests = r.u64();
        std::uint32_t n_buckets = r.u32();
        for (std::uint32_t b = 0; b < n_buckets; ++b) {
            BucketId bucket = r.u32();
            led.counts[bucket] = r.u32();
        }
        gw.ledgers_.emplace(std::move(id), std::move(led));
    }
    if (!r.done()) throw error(errc::corrupt_snapshot, "snapshot has trailing bytes");
    return gw;
}

Gateway Gateway::restore_file(const std::string& path, std::optional<BucketModel> model) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw error(errc::io_error, "cannot open snapshot: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return restore(bytes, std::move(model));
}

}  // namespace lads
