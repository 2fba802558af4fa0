#include <cmath>
#include <cstring>
#include <map>
#include <optional>
#include <unordered_set>

#include "lads/error.hpp"
#include "lads/experiment.hpp"
#include "lads/philox.hpp"

namespace lads {
namespace {

// Domain key separating per-repetition sub-seed derivation from every other
// philox use in the artifact.
constexpr std::uint64_t kRepDomain = 0x4c41445352455053ull;

std::string byte_key(const std::vector<double>& v) {
    std::string s(v.size() * sizeof(double), '\0');
    if (!v.empty()) std::memcpy(s.data(), v.data(), s.size());
    return s;
}

}  // namespace

double SampleStream::next_uniform() { return open_unit(stream_word(seed_, pos_++)); }

double SampleStream::next_gaussian() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1 = next_uniform();
    double u2 = next_uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
}

QueryEmbedding SampleStream::draw_query(const QueryModel& model) {
    if (model.centers.empty()) throw error(errc::empty_input, "query model has no centers");
    std::size_t j = 0;
    if (model.centers.size() > 1) {
        double u = next_uniform();
        j = std::min(static_cast<std::size_t>(u * static_cast<double>(model.centers.size())),
                     model.centers.size() - 1);
    }
    const QueryEmbedding& center = model.centers[j];
    if (model.radius == 0.0) return center;
    const double sigma = model.radius / 2.0;
    const double r2 = model.radius * model.radius;
    std::vector<double> offset(center.size());
    for (;;) {
        double s2 = 0.0;
        for (double& o : offset) {
            o = sigma * next_gaussian();
            s2 += o * o;
        }
        if (s2 <= r2) break;
    }
    QueryEmbedding q = center;
    for (std::size_t i = 0; i < q.size(); ++i) q[i] += offset[i];
    return q;
}

RepSeeds rep_seeds(const ExperimentConfig& cfg, std::size_t rep) {
    philox::block ctr{static_cast<std::uint64_t>(cfg.regime), cfg.K, cfg.T, rep};
    philox::block w = philox::encrypt(ctr, {cfg.master_seed, kRepDomain});
    return RepSeeds{w[0], w[1], w[2], w[3]};
}

Transcript build_transcript(const ExperimentConfig& cfg, std::size_t rep) {
    cfg.validate();
    const RepSeeds rs = rep_seeds(cfg, rep);
    const std::size_t noise_dim = cfg.teacher_kind == TeacherKind::token ? cfg.vocab : cfg.out_dim;

    GatewayConfig g;
    g.seed_spec = SeedSpec(rs.gateway_key, perm_id::keyed_mix);
    g.noise_dim = noise_dim;
    g.fresh_key = rs.fresh_key;
    switch (cfg.regime) {
        case Regime::iid:
            g.mode = GatewayMode::simple;
            g.alpha = 0.0;  // every request gets private noise
            break;
        case Regime::lads_simple:
            g.mode = GatewayMode::simple;
            g.alpha = cfg.alpha;
            break;
        case Regime::lads:
            g.mode = GatewayMode::conditional;
            g.alpha = cfg.alpha;
            g.bucket_model = BucketModel::nearest_center(cfg.queries.centers, cfg.cover_radius());
            break;
    }
    Gateway gateway(std::move(g));

    std::optional<SoftmaxTokenTeacher> token_teacher;
    std::optional<LinearGaussianTeacher> linear_teacher;
    if (cfg.teacher_kind == TeacherKind::token)
        token_teacher = random_softmax_teacher(Seed{cfg.teacher_seed}, cfg.vocab, cfg.q_dim,
                                               cfg.W, cfg.input_bound(), cfg.teacher_scale);
    else
        linear_teacher = random_linear_teacher(Seed{cfg.teacher_seed}, cfg.out_dim, cfg.q_dim,
                                               cfg.sigma, cfg.teacher_scale);

    SampleStream queries(Seed{rs.query_seed});
    Transcript tr;
    tr.regime = cfg.regime;
    tr.teacher_kind = cfg.teacher_kind;
    tr.K = cfg.K;
    tr.T = cfg.T;
    tr.alpha = cfg.regime == Regime::iid ? 0.0 : cfg.alpha;
    tr.rep = rep;
    tr.records.reserve(cfg.K * cfg.T);
    for (std::size_t k = 0; k < cfg.K; ++k) {
        const AccountId account = "acct-" + std::to_string(k);
        for (std::size_t t = 0; t < cfg.T; ++t) {
            TranscriptRecord rec;
            rec.account = static_cast<std::uint32_t>(k);
            rec.q = cfg.regime == Regime::lads ? queries.draw_query(cfg.queries)
                                               : cfg.queries.centers[0];
            ServeResult served = cfg.regime == Regime::lads
                                     ? gateway.serve_conditional(account, rec.q)
                                     : gateway.serve_simple(account);
            rec.bucket = served.bucket;
            rec.depth = served.depth;
            rec.seed = served.seed;
            rec.noise = std::move(served.noise);
            if (cfg.teacher_kind == TeacherKind::token)
                rec.token = generate_token(*token_teacher, rec.q, gumbel_from_gaussian(rec.noise));
            else
                rec.continuous = generate_continuous(*linear_teacher, rec.q, rec.noise);
            tr.records.push_back(std::move(rec));
        }
    }
    return tr;
}

std::size_t distinct_noise_count(const Transcript& tr) {
    std::unordered_set<std::string> seen;
    seen.reserve(tr.records.size() * 2);
    for (const TranscriptRecord& rec : tr.records) seen.insert(byte_key(rec.noise));
    return seen.size();
}

std::size_t distinct_response_count(const Transcript& tr) {
    if (tr.teacher_kind == TeacherKind::token) {
        std::unordered_set<std::uint32_t> seen;
        for (const TranscriptRecord& rec : tr.records) seen.insert(rec.token);
        return seen.size();
    }
    std::unordered_set<std::string> seen;
    seen.reserve(tr.records.size() * 2);
    for (const TranscriptRecord& rec : tr.records) seen.insert(byte_key(rec.continuous));
    return seen.size();
}

namespace {

std::map<std::pair<BucketId, std::uint32_t>, std::vector<std::size_t>> cells_by_seed_pair(
    const Transcript& tr) {
    std::map<std::pair<BucketId, std::uint32_t>, std::vector<std::size_t>> cells;
    for (std::size_t i = 0; i < tr.records.size(); ++i)
        cells[{tr.records[i].bucket, tr.records[i].depth}].push_back(i);
    return cells;
}

}  // namespace

stats::CouplingReport matched_pair_coupling(const Transcript& tr) {
    if (tr.K < 2) throw error(errc::invalid_argument, "matched pairs need at least two accounts");
    std::vector<NoiseVector> a, b;
    for (const auto& [cell, idx] : cells_by_seed_pair(tr)) {
        // Records are account-major, so indices within a cell are already in
        // increasing account order; chain consecutive distinct accounts.
        for (std::size_t i = 0; i + 1 < idx.size(); ++i) {
            const TranscriptRecord& x = tr.records[idx[i]];
            const TranscriptRecord& y = tr.records[idx[i + 1]];
            if (x.account == y.account) continue;
            a.push_back(x.noise);
            b.push_back(y.noise);
        }
    }
    return stats::cross_account_correlation(a, b);
}

stats::CouplingReport unmatched_pair_coupling(const Transcript& tr) {
    // Control: same account, same bucket, consecutive depths. Seeds differ,
    // so these pairs stay independent at every alpha.
    std::map<std::pair<std::uint32_t, BucketId>, std::vector<std::size_t>> by_account_bucket;
    for (std::size_t i = 0; i < tr.records.size(); ++i)
        by_account_bucket[{tr.records[i].account, tr.records[i].bucket}].push_back(i);
    std::vector<NoiseVector> a, b;
    for (const auto& [key, idx] : by_account_bucket)
        for (std::size_t i = 0; i + 1 < idx.size(); ++i) {
            a.push_back(tr.records[idx[i]].noise);
            b.push_back(tr.records[idx[i + 1]].noise);
        }
    return stats::cross_account_correlation(a, b);
}

WeightProfile weight_profile(const Transcript& tr) {
    if (tr.records.empty()) throw error(errc::empty_input, "weight profile needs records");
    WeightProfile p;
    const double m = static_cast<double>(tr.records.size());
    for (const TranscriptRecord& rec : tr.records)
        p.w[{rec.bucket, rec.depth}] += 1.0 / m;
    return p;
}

WeightProfile weight_profile(const Transcript& tr, const BucketModel& model,
                             const CenterAssignment& task) {
    if (tr.records.empty()) throw error(errc::empty_input, "weight profile needs records");
    std::vector<QueryEmbedding> queries;
    queries.reserve(tr.records.size());
    for (const TranscriptRecord& rec : tr.records) queries.push_back(rec.q);
    CompressionReport audit = audit_transcript(model, queries, task);
    WeightProfile p;
    const double m = static_cast<double>(tr.records.size());
    for (std::size_t i = 0; i < tr.records.size(); ++i) {
        if (audit.assigned_center[i] < 0) continue;
        p.w[{static_cast<BucketId>(audit.assigned_center[i]), tr.records[i].depth}] += 1.0 / m;
    }
    p.rho = audit.bad_fraction;
    return p;
}

double effective_sample_size(const WeightProfile& profile) {
    double sum_sq = 0.0;
    for (const auto& [cell, w] : profile.w) {
        if (w < 0.0) throw error(errc::invalid_argument, "weights must be nonnegative");
        sum_sq += w * w;
    }
    if (sum_sq == 0.0) throw error(errc::empty_input, "all-zero weight profile");
    return 1.0 / sum_sq;
}

}  // namespace lads
