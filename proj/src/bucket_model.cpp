#include "lads/bucket_model.hpp"

#include <cmath>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "lads/error.hpp"
#include "lads/noise.hpp"

namespace lads {
namespace {

void check_centers(const std::vector<QueryEmbedding>& centers, std::size_t dim) {
    for (const auto& c : centers) {
        if (c.size() != dim)
            throw error(errc::dimension_mismatch, "center dim differs from model dim");
        for (double v : c)
            if (!std::isfinite(v))
                throw error(errc::invalid_argument, "center has a non-finite entry");
    }
    for (std::size_t i = 0; i < centers.size(); ++i)
        for (std::size_t j = i + 1; j < centers.size(); ++j)
            if (centers[i] == centers[j])
                throw error(errc::invalid_argument, "centers must be pairwise distinct");
}

void check_query(const BucketModel& model, const QueryEmbedding& q) {
    if (q.size() != model.dim())
        throw error(errc::dimension_mismatch, "query dim differs from model dim");
}

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace

BucketModel BucketModel::nearest_center(std::vector<QueryEmbedding> centers, double radius) {
    if (centers.empty())
        throw error(errc::empty_input, "nearest-center model needs at least one center");
    if (!(radius >= 0.0))
        throw error(errc::invalid_argument, "cover radius must be nonnegative");
    BucketModel m;
    m.mode_ = Mode::nearest_center;
    m.dim_ = centers.front().size();
    if (m.dim_ == 0) throw error(errc::invalid_argument, "centers must have positive dim");
    check_centers(centers, m.dim_);
    m.centers_ = std::move(centers);
    m.radius_ = radius;
    return m;
}

BucketModel BucketModel::lsh(std::size_t dim, std::size_t bits, std::uint64_t seed,
                             std::vector<QueryEmbedding> centers, double radius) {
    if (dim == 0) throw error(errc::invalid_argument, "lsh model needs positive dim");
    if (bits < 1 || bits > 30)
        throw error(errc::invalid_argument, "lsh bits must lie in [1, 30]");
    if (!(radius >= 0.0))
        throw error(errc::invalid_argument, "cover radius must be nonnegative");
    BucketModel m;
    m.mode_ = Mode::lsh;
    m.dim_ = dim;
    m.bits_ = bits;
    m.seed_ = seed;
    m.radius_ = radius;
    check_centers(centers, dim);
    m.centers_ = std::move(centers);
    NoiseVector raw = gaussian_noise(Seed{seed}, bits * dim);
    m.hyperplanes_.reserve(bits);
    for (std::size_t k = 0; k < bits; ++k) {
        QueryEmbedding plane(raw.begin() + static_cast<std::ptrdiff_t>(k * dim),
                             raw.begin() + static_cast<std::ptrdiff_t>((k + 1) * dim));
        double n = norm(plane);
        if (n == 0.0) throw error(errc::numeric_failure, "degenerate hyperplane draw");
        for (double& v : plane) v /= n;
        m.hyperplanes_.push_back(std::move(plane));
    }
    return m;
}

std::size_t BucketModel::bucket_space() const noexcept {
    return mode_ == Mode::nearest_center ? centers_.size() : (std::size_t{1} << bits_);
}

std::uint64_t BucketModel::fingerprint() const { return fnv1a(to_text()); }

std::string BucketModel::to_text() const {
    nlohmann::json j;
    j["mode"] = mode_ == Mode::nearest_center ? "nearest_center" : "lsh";
    j["radius"] = radius_;
    j["centers"] = centers_;
    if (mode_ == Mode::lsh) {
        j["dim"] = dim_;
        j["bits"] = bits_;
        j["seed"] = seed_;
    }
    return j.dump(2);
}

BucketModel BucketModel::from_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw error(errc::config_invalid, std::string("bucket model parse: ") + e.what());
    }
    try {
        std::string mode = j.at("mode").get<std::string>();
        double radius = j.value("radius", 0.0);
        std::vector<QueryEmbedding> centers =
            j.value("centers", std::vector<QueryEmbedding>{});
        if (mode == "nearest_center") return nearest_center(std::move(centers), radius);
        if (mode == "lsh")
            return lsh(j.at("dim").get<std::size_t>(), j.at("bits").get<std::size_t>(),
                       j.at("seed").get<std::uint64_t>(), std::move(centers), radius);
        throw error(errc::unknown_mode, "bucket model mode must be nearest_center or lsh");
    } catch (const nlohmann::json::exception& e) {
        throw error(errc::config_invalid, std::string("bucket model fields: ") + e.what());
    }
}

void BucketModel::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw error(errc::io_error, "cannot write bucket model: " + path);
    out << to_text() << "\n";
    if (!out) throw error(errc::io_error, "short write on bucket model: " + path);
}

BucketModel BucketModel::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw error(errc::io_error, "cannot open bucket model: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_text(text);
}

BucketId assign_nearest_center(const BucketModel& model, const QueryEmbedding& q) {
    if (model.mode() != BucketModel::Mode::nearest_center)
        throw error(errc::unknown_mode, "assign_nearest_center on an lsh model");
    if (model.centers().empty())
        throw error(errc::empty_input, "model has no centers");
    check_query(model, q);
    std::size_t best = 0;
    double best_d = squared_distance(q, model.centers()[0]);
    for (std::size_t j = 1; j < model.centers().size(); ++j) {
        double d = squared_distance(q, model.centers()[j]);
        if (d < best_d) {
            best_d = d;
            best = j;
        }
    }
    return static_cast<BucketId>(best);
}

BucketId lsh_hash(const BucketModel& model, const QueryEmbedding& q) {
    if (model.mode() != BucketModel::Mode::lsh)
        throw error(errc::unknown_mode, "lsh_hash on a nearest-center model");
    check_query(model, q);
    BucketId id = 0;
    for (std::size_t k = 0; k < model.lsh_bits(); ++k) {
        // sign(0) counts as nonnegative: bit set.
        if (dot(model.hyperplanes()[k], q) >= 0.0) id |= (BucketId{1} << k);
    }
    return id;
}

BucketId assign_bucket(const BucketModel& model, const QueryEmbedding& q) {
    return model.mode() == BucketModel::Mode::nearest_center ? assign_nearest_center(model, q)
                                                             : lsh_hash(model, q);
}

CollisionEstimate estimate_collision_probs(const BucketModel& model,
                                           const std::vector<QueryPair>& near_pairs,
                                           const std::vector<QueryPair>& far_pairs) {
    if (near_pairs.empty() || far_pairs.empty())
        throw error(errc::empty_input, "collision estimation needs non-empty pair lists");
    auto rate = [&](const std::vector<QueryPair>& pairs) {
        std::size_t hits = 0;
        for (const auto& [a, b] : pairs)
            if (assign_bucket(model, a) == assign_bucket(model, b)) ++hits;
        return static_cast<double>(hits) / static_cast<double>(pairs.size());
    };
    return CollisionEstimate{rate(near_pairs), rate(far_pairs)};
}

CompressionReport audit_transcript(const BucketModel& model,
                                   const std::vector<QueryEmbedding>& queries,
                                   const CenterAssignment& assignment) {
    if (queries.empty())
        throw error(errc::empty_input, "audit needs a non-empty transcript");
    if (assignment.centers.empty())
        throw error(errc::empty_input, "audit needs reference centers");
    double r2 = assignment.radius * assignment.radius;
    CompressionReport rep;
    rep.total_queries = queries.size();
    rep.assigned_center.reserve(queries.size());
    std::unordered_set<BucketId> occupied;
    for (const auto& q : queries) {
        occupied.insert(assign_bucket(model, q));
        std::int64_t best = -1;
        double best_d = 0.0;
        for (std::size_t j = 0; j < assignment.centers.size(); ++j) {
            double d = squared_distance(q, assignment.centers[j]);
            if (d <= r2 && (best < 0 || d < best_d)) {
                best = static_cast<std::int64_t>(j);
                best_d = d;
            }
        }
        if (best >= 0 && model.mode() == BucketModel::Mode::lsh &&
            assign_bucket(model, q) !=
                assign_bucket(model, assignment.centers[static_cast<std::size_t>(best)]))
            best = -1;
        if (best < 0) ++rep.bad_queries;
        rep.assigned_center.push_back(best);
    }
    rep.occupied_buckets = occupied.size();
    rep.bad_fraction = static_cast<double>(rep.bad_queries) / static_cast<double>(queries.size());
    return rep;
}

}  // namespace lads
