#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lads/embedding.hpp"

namespace lads {

using BucketId = std::uint32_t;

// Private query-to-bucket map. Immutable after construction; every lookup is
// read-only, so concurrent use needs no synchronization.
class BucketModel {
  public:
    enum class Mode { nearest_center, lsh };

    // Nearest-center assignment under Euclidean distance; `radius` is the
    // cover radius used by audits (not by assignment itself).
    static BucketModel nearest_center(std::vector<QueryEmbedding> centers, double radius);

    // b-bit random-hyperplane hash; hyperplanes are unit vectors drawn
    // deterministically from `seed`. Optional centers/radius feed audits.
    static BucketModel lsh(std::size_t dim, std::size_t bits, std::uint64_t seed,
                           std::vector<QueryEmbedding> centers = {}, double radius = 0.0);

    Mode mode() const noexcept { return mode_; }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t bucket_space() const noexcept;
    const std::vector<QueryEmbedding>& centers() const noexcept { return centers_; }
    double radius() const noexcept { return radius_; }
    std::size_t lsh_bits() const noexcept { return bits_; }
    std::uint64_t lsh_seed() const noexcept { return seed_; }
    const std::vector<QueryEmbedding>& hyperplanes() const noexcept { return hyperplanes_; }

    // Stable content fingerprint, used to pair snapshots with the model they
    // were taken under.
    std::uint64_t fingerprint() const;

    std::string to_text() const;
    static BucketModel from_text(const std::string& text);
    void save(const std::string& path) const;
    static BucketModel load(const std::string& path);

  private:
    BucketModel() = default;

    Mode mode_ = Mode::nearest_center;
    std::size_t dim_ = 0;
    std::vector<QueryEmbedding> centers_;
    double radius_ = 0.0;
    std::size_t bits_ = 0;
    std::uint64_t seed_ = 0;
    std::vector<QueryEmbedding> hyperplanes_;
};

BucketId assign_nearest_center(const BucketModel& model, const QueryEmbedding& q);
BucketId lsh_hash(const BucketModel& model, const QueryEmbedding& q);
// Mode dispatch.
BucketId assign_bucket(const BucketModel& model, const QueryEmbedding& q);

using QueryPair = std::pair<QueryEmbedding, QueryEmbedding>;

struct CollisionEstimate {
    double p1_hat = 0.0;
    double p2_hat = 0.0;
};
CollisionEstimate estimate_collision_probs(const BucketModel& model,
                                           const std::vector<QueryPair>& near_pairs,
                                           const std::vector<QueryPair>& far_pairs);

// Reference centers and cover radius a transcript is audited against.
struct CenterAssignment {
    std::vector<QueryEmbedding> centers;
    double radius = 0.0;
};

struct CompressionReport {
    std::size_t total_queries = 0;
    std::size_t occupied_buckets = 0;  // distinct bucket ids over the transcript
    std::size_t bad_queries = 0;       // outside every radius-R ball, or hash != hash(center)
    double bad_fraction = 0.0;
    // Per-query assigned center (index into CenterAssignment.centers) or -1 if bad.
    std::vector<std::int64_t> assigned_center;
};

CompressionReport audit_transcript(const BucketModel& model,
                                   const std::vector<QueryEmbedding>& queries,
                                   const CenterAssignment& assignment);

}  // namespace lads
