#include "lads/verify.hpp"

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "lads/bucket_model.hpp"
#include "lads/error.hpp"
#include "lads/gateway.hpp"
#include "lads/noise.hpp"
#include "lads/pipeline.hpp"
#include "lads/rademacher.hpp"
#include "lads/stats.hpp"
#include "lads/teacher.hpp"

namespace lads {

namespace {

// Every tolerance the suite asserts against, in one place.
constexpr double kKsSignificance = 0.01;
constexpr std::size_t kLosslessCoords = 100000;  // 1e5 coordinates per alpha
constexpr std::size_t kAutocorrMaxLag = 5;
constexpr std::size_t kCouplingAccounts = 50;
constexpr std::size_t kCouplingDepths = 200;
constexpr std::size_t kCouplingPairs = 12500;  // >= 1e4 matched pairs
constexpr double kCouplingCorrTarget = 0.70;
constexpr double kCouplingCorrTol = 0.05;
constexpr double kSlopeIid = -0.5;
constexpr double kSlopeTol = 0.1;
constexpr double kRatioLo = 2.0;
constexpr double kRatioHi = 6.4;
constexpr std::size_t kRademacherInstances = 50;
constexpr double kBoundReference = 0.2828427124746190;  // 2 sqrt(2) / 10
constexpr double kBoundTol = 1e-4;
constexpr double kNeffRelTol = 1e-12;
constexpr double kAlignDelta = 0.05;
constexpr double kAlignSlack = 0.02;
constexpr std::size_t kAlignM = 10000;
constexpr std::size_t kAlignReps = 500;
// Bias demonstration instance. The teacher draw and center construction are
// part of the pinned design: centers sit on normalized teacher rows, far
// enough out that the response field is confident at every center, so the
// task family gets intrinsically harder as the cluster radius grows (the
// reference curve check below asserts that precondition explicitly).
constexpr std::uint64_t kBiasTeacherSeed = 7;
constexpr double kBiasW = 2.0;
constexpr double kBiasCenterNorm = 6.0;
constexpr std::size_t kBiasCenters = 4;
constexpr std::size_t kBiasK = 16;
constexpr std::size_t kBiasT = 1024;
constexpr std::size_t kBiasReps = 20;
constexpr double kBiasRadii[] = {0.0, 0.5, 1.0, 2.0};
constexpr std::uint64_t kBiasMasterSeed = 11;
constexpr std::uint64_t kVerifyGatewayKey = 0x4c41445356465947ull;
constexpr std::uint64_t kVerifyFreshKey = 99;

std::string fmt(const char* pattern, ...) {
    char buf[512];
    va_list args;
    va_start(args, pattern);
    std::vsnprintf(buf, sizeof buf, pattern, args);
    va_end(args);
    return buf;
}

template <class Body>
CheckResult timed_check(std::string id, Body&& body) {
    CheckResult r;
    r.id = std::move(id);
    auto t0 = std::chrono::steady_clock::now();
    try {
        body(r);
    } catch (const std::exception& e) {
        r.pass = false;
        if (!r.detail.empty()) r.detail += "; ";
        r.detail += fmt("aborted: %s", e.what());
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

Gateway simple_gateway(double alpha, perm_id perm) {
    GatewayConfig cfg;
    cfg.mode = GatewayMode::simple;
    cfg.seed_spec = SeedSpec(kVerifyGatewayKey, perm, /*allow_test_permutations=*/true);
    cfg.noise_dim = 8;
    cfg.alpha = alpha;
    cfg.fresh_key = kVerifyFreshKey;
    return Gateway(std::move(cfg));
}

// Independent accumulation route for n_eff: extended precision over sorted
// weights, so agreement with the production code is a real cross-check.
double brute_force_neff(const WeightProfile& profile) {
    std::vector<long double> w2;
    w2.reserve(profile.w.size());
    for (const auto& [cell, w] : profile.w) w2.push_back(static_cast<long double>(w) * w);
    std::sort(w2.begin(), w2.end());
    long double sum = 0.0L;
    for (long double v : w2) sum += v;
    return static_cast<double>(1.0L / sum);
}

bool close_rel(double a, double b, double rel) {
    double scale = std::max(std::fabs(a), std::fabs(b));
    return std::fabs(a - b) <= rel * std::max(scale, 1.0);
}

std::vector<TokenSample> rademacher_sample(std::size_t n, std::size_t dim, double r,
                                           std::size_t vocab, Seed seed) {
    SoftmaxTokenTeacher teacher = random_softmax_teacher(seed, vocab, dim, 1.0, r, 1.0);
    SampleStream g(Seed{seed.value ^ 0x52414453414d50ull});
    std::vector<TokenSample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        QueryEmbedding q(dim);
        double norm2 = 0.0;
        for (double& v : q) {
            v = g.next_gaussian();
            norm2 += v * v;
        }
        double scale = 0.9 * r / std::max(1.0, std::sqrt(norm2));
        for (double& v : q) v *= scale;
        NoiseVector gumbel(vocab);
        for (double& v : gumbel) v = gumbel_from_gaussian(g.next_gaussian());
        out.push_back(TokenSample{q, generate_token(teacher, q, gumbel), 1.0});
    }
    return out;
}

std::vector<QueryEmbedding> bias_centers(const SoftmaxTokenTeacher& teacher) {
    std::vector<QueryEmbedding> centers;
    for (std::size_t y = 0; y < kBiasCenters; ++y) {
        QueryEmbedding c(teacher.q_dim());
        double norm2 = 0.0;
        for (std::size_t j = 0; j < teacher.q_dim(); ++j) {
            c[j] = teacher.weights().at(y, j);
            norm2 += c[j] * c[j];
        }
        double scale = kBiasCenterNorm / std::sqrt(norm2);
        for (double& v : c) v *= scale;
        centers.push_back(std::move(c));
    }
    return centers;
}

ExperimentConfig bias_config(const std::vector<QueryEmbedding>& centers, double radius,
                             double alpha) {
    ExperimentConfig cfg;
    cfg.regime = Regime::lads;
    cfg.K = kBiasK;
    cfg.T = kBiasT;
    cfg.alpha = alpha;
    cfg.q_dim = 8;
    cfg.vocab = 8;
    cfg.W = kBiasW;
    cfg.teacher_seed = kBiasTeacherSeed;
    cfg.master_seed = kBiasMasterSeed;
    cfg.queries.centers = centers;
    cfg.queries.radius = radius;
    return cfg;
}

std::vector<PointResult> grid_rows(const ExperimentConfig& base, Regime regime, std::size_t k,
                                   std::size_t t, double alpha, std::size_t reps,
                                   std::size_t parallelism) {
    SweepConfig sweep;
    sweep.base = base;
    sweep.regimes = {regime};
    sweep.Ks = {k};
    sweep.Ts = {t};
    sweep.alphas = {alpha};
    sweep.repetitions = reps;
    sweep.parallelism = parallelism;
    return run_grid(sweep);
}

std::pair<double, double> bootstrap_median_ci(const std::vector<double>& xs, std::size_t draws,
                                              Seed seed) {
    SampleStream stream(seed);
    std::vector<double> medians;
    medians.reserve(draws);
    std::vector<double> resample(xs.size());
    for (std::size_t b = 0; b < draws; ++b) {
        for (double& v : resample) {
            auto idx = static_cast<std::size_t>(stream.next_uniform() * xs.size());
            v = xs[std::min(idx, xs.size() - 1)];
        }
        medians.push_back(stats::median(resample));
    }
    std::sort(medians.begin(), medians.end());
    auto pick = [&](double q) {
        auto idx = static_cast<std::size_t>(std::llround(q * (draws - 1)));
        return medians[std::min(idx, draws - 1)];
    };
    return {pick(0.025), pick(0.975)};
}

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

VerifySuite::VerifySuite(VerifyOptions opts) : opts_(std::move(opts)) {}

const SweepReport& VerifySuite::prop1() {
    if (!prop1_) {
        SweepConfig sweep = SweepConfig::preset("prop1");
        sweep.parallelism = opts_.parallelism;
        prop1_ = scaling_sweep(sweep);
    }
    return *prop1_;
}

CheckResult VerifySuite::losslessness() {
    return timed_check("1-losslessness", [&](CheckResult& r) {
        r.pass = true;
        for (double alpha : {0.0, 0.7, 0.9, 1.0}) {
            Gateway gw = simple_gateway(alpha, opts_.seed_permutation);
            std::vector<double> coords;
            coords.reserve(kLosslessCoords);
            const std::size_t serves = kLosslessCoords / gw.noise_dim();
            for (std::size_t t = 0; t < serves; ++t) {
                ServeResult res = gw.serve_simple("verify-acct");
                coords.insert(coords.end(), res.noise.begin(), res.noise.end());
            }
            stats::TestResult ks =
                stats::ks_test(coords, stats::Reference::std_normal, kKsSignificance);
            double limit = 3.0 / std::sqrt(static_cast<double>(coords.size()));
            double worst_ac = 0.0;
            for (std::size_t lag = 1; lag <= kAutocorrMaxLag; ++lag)
                worst_ac = std::max(worst_ac, std::fabs(stats::autocorrelation(coords, lag)));
            bool ok = ks.pass && worst_ac <= limit;
            r.pass = r.pass && ok;
            r.detail += fmt("a=%.1f KS=%.4f(<%.4f) ac=%.4f(<%.4f)%s ", alpha, ks.statistic,
                            ks.critical, worst_ac, limit, ok ? "" : " FAIL");
        }
    });
}

CheckResult VerifySuite::coupling() {
    return timed_check("2-coupling", [&](CheckResult& r) {
        Gateway shared = simple_gateway(1.0, opts_.seed_permutation);
        std::vector<std::vector<NoiseVector>> noise(kCouplingAccounts);
        for (std::size_t k = 0; k < kCouplingAccounts; ++k) {
            for (std::size_t t = 0; t < kCouplingDepths; ++t)
                noise[k].push_back(shared.serve_simple("acct-" + std::to_string(k)).noise);
        }
        std::size_t matched = 0, duplicated = 0;
        for (std::size_t k = 1; k < kCouplingAccounts; ++k) {
            for (std::size_t t = 0; t < kCouplingDepths; ++t) {
                ++matched;
                if (noise[k][t] == noise[0][t]) ++duplicated;
            }
        }
        double dup_rate = static_cast<double>(duplicated) / static_cast<double>(matched);

        // Control: one account's own sequence must never repeat. A collapsed
        // seed generator passes the duplication test above but fails here.
        std::set<NoiseVector> own(noise[0].begin(), noise[0].end());
        bool distinct_ok = own.size() == kCouplingDepths;

        Gateway mixed = simple_gateway(0.7, opts_.seed_permutation);
        std::vector<NoiseVector> a, b;
        for (std::size_t t = 0; t < kCouplingPairs; ++t) {
            a.push_back(mixed.serve_simple("acct-a").noise);
            b.push_back(mixed.serve_simple("acct-b").noise);
        }
        stats::CouplingReport rep = stats::cross_account_correlation(a, b);
        bool corr_ok = std::fabs(rep.correlation - kCouplingCorrTarget) <= kCouplingCorrTol &&
                       rep.duplicate_rate == 0.0;

        r.pass = dup_rate == 1.0 && distinct_ok && corr_ok;
        r.detail = fmt(
            "a=1 duplicate rate %.4f over %zu pairs; own-sequence distinct %zu/%zu; "
            "a=0.7 corr %.4f over %zu pairs (target %.2f+-%.2f)",
            dup_rate, matched, own.size(), kCouplingDepths, rep.correlation, rep.pairs,
            kCouplingCorrTarget, kCouplingCorrTol);
    });
}

CheckResult VerifySuite::collapse() {
    return timed_check("3-collapse", [&](CheckResult& r) {
        ExperimentConfig base = SweepConfig::preset("prop1").base;

        ExperimentConfig token_cfg = base;
        token_cfg.regime = Regime::lads_simple;
        token_cfg.K = 50;
        token_cfg.T = 100;
        token_cfg.alpha = 1.0;
        Transcript token_tr = build_transcript(token_cfg, 0);
        std::map<NoiseVector, std::size_t> noise_counts;
        for (const TranscriptRecord& rec : token_tr.records) ++noise_counts[rec.noise];
        bool noise_ok = noise_counts.size() == token_cfg.T;
        for (const auto& [vec, count] : noise_counts) noise_ok = noise_ok && count == token_cfg.K;

        ExperimentConfig linear_cfg = token_cfg;
        linear_cfg.teacher_kind = TeacherKind::linear;
        linear_cfg.out_dim = 4;
        std::size_t distinct_responses = distinct_response_count(build_transcript(linear_cfg, 0));
        bool response_ok = distinct_responses == linear_cfg.T;

        const SweepReport& sweep = prop1();
        bool slopes_ok = true;
        std::string slope_note;
        auto iid = sweep.slopes.find("iid_gap_vs_KT");
        if (iid == sweep.slopes.end()) {
            slopes_ok = false;
            slope_note += " iid KT fit missing";
        } else {
            slopes_ok = slopes_ok && std::fabs(iid->second.slope - kSlopeIid) <= kSlopeTol;
            slope_note += fmt(" iid KT slope %+.4f", iid->second.slope);
        }
        for (std::size_t t : {64, 256, 1024}) {
            auto it = sweep.slopes.find("lads_simple_gap_vs_K_at_T" + std::to_string(t));
            if (it == sweep.slopes.end()) {
                slopes_ok = false;
                slope_note += fmt(" T%zu fit missing", t);
                continue;
            }
            slopes_ok = slopes_ok && std::fabs(it->second.slope) <= kSlopeTol;
            slope_note += fmt(" simple K slope@T%zu %+.4f", t, it->second.slope);
        }

        r.pass = noise_ok && response_ok && slopes_ok;
        r.detail = fmt("K=50 T=100: %zu distinct coupled draws (each x%zu), %zu distinct "
                       "continuous responses;%s (tol %.1f)",
                       noise_counts.size(), token_cfg.K, distinct_responses, slope_note.c_str(),
                       kSlopeTol);
    });
}

CheckResult VerifySuite::separation() {
    return timed_check("4-separation", [&](CheckResult& r) {
        const SweepReport& sweep = prop1();
        r.pass = true;
        for (std::size_t t : {64, 256, 1024}) {
            auto it = sweep.scalars.find("gap_ratio_simple_over_iid_K16_T" + std::to_string(t));
            if (it == sweep.scalars.end()) {
                r.pass = false;
                r.detail += fmt("T%zu ratio missing; ", t);
                continue;
            }
            bool ok = it->second >= kRatioLo && it->second <= kRatioHi;
            r.pass = r.pass && ok;
            r.detail += fmt("T%zu ratio %.3f%s; ", t, it->second, ok ? "" : " FAIL");
        }
        r.detail += fmt("band [%.1f, %.1f]", kRatioLo, kRatioHi);
    });
}

CheckResult VerifySuite::rademacher() {
    return timed_check("5-rademacher", [&](CheckResult& r) {
        std::vector<TokenSample> reference = rademacher_sample(100, 3, 1.0, 2, Seed{21});
        RademacherEstimate ref = rademacher_check(reference, 1.0, 1.0, 2, 5, 8, Seed{77});
        bool bound_ok = std::fabs(ref.bound - kBoundReference) <= kBoundTol;

        const std::size_t ns[] = {25, 100, 400};
        const std::size_t vocabs[] = {2, 4, 8};
        const std::size_t dims[] = {3, 8};
        const double balls[] = {0.5, 1.0, 2.0};
        std::size_t passes = 0;
        for (std::size_t i = 0; i < kRademacherInstances; ++i) {
            std::size_t n = ns[i % 3];
            std::size_t vocab = vocabs[(i / 3) % 3];
            std::size_t dim = dims[(i / 9) % 2];
            double w = balls[(i / 18) % 3];
            try {
                std::vector<TokenSample> sample =
                    rademacher_sample(n, dim, 1.0, vocab, Seed{1000 + i});
                RademacherEstimate est =
                    rademacher_check(sample, 1.0, w, vocab, 5, 8, Seed{2000 + i});
                if (est.estimate <= est.bound) ++passes;
            } catch (const error&) {
                // estimate above bound (or optimizer blowup) counts as a miss
            }
        }
        r.pass = bound_ok && passes == kRademacherInstances;
        r.detail = fmt("closed-form bound %.10f (|delta| %.2e <= %.0e); estimate <= bound in "
                       "%zu/%zu instances",
                       ref.bound, std::fabs(ref.bound - kBoundReference), kBoundTol, passes,
                       kRademacherInstances);
    });
}

CheckResult VerifySuite::sample_size() {
    return timed_check("6-neff", [&](CheckResult& r) {
        r.pass = true;

        WeightProfile two;
        two.w[{0, 1}] = 0.5;
        two.w[{0, 2}] = 0.5;
        WeightProfile three;
        three.w[{0, 1}] = 0.5;
        three.w[{1, 1}] = 0.25;
        three.w[{1, 2}] = 0.25;
        r.pass = r.pass && effective_sample_size(two) == 2.0;
        r.pass = r.pass && close_rel(effective_sample_size(three), 8.0 / 3.0, kNeffRelTol);

        ExperimentConfig simple_cfg = SweepConfig::preset("prop1").base;
        simple_cfg.regime = Regime::lads_simple;
        simple_cfg.K = 10;
        simple_cfg.T = 50;
        simple_cfg.alpha = 1.0;
        WeightProfile uniform = weight_profile(build_transcript(simple_cfg, 0));

        SoftmaxTokenTeacher teacher = random_softmax_teacher(
            Seed{kBiasTeacherSeed}, 8, 8, kBiasW, kBiasCenterNorm + 2.0, 1.0);
        std::vector<QueryEmbedding> centers = bias_centers(teacher);
        ExperimentConfig cond_cfg = bias_config(centers, 1.0, 1.0);
        cond_cfg.K = 5;
        cond_cfg.T = 200;
        Transcript cond = build_transcript(cond_cfg, 0);
        BucketModel model = BucketModel::nearest_center(centers, cond_cfg.queries.radius);
        WeightProfile clean =
            weight_profile(cond, model, CenterAssignment{centers, cond_cfg.queries.radius});
        WeightProfile tight = weight_profile(cond, model, CenterAssignment{centers, 0.4});
        r.pass = r.pass && clean.rho == 0.0 && tight.rho > 0.0;

        struct ProfileCase {
            const WeightProfile* profile;
            std::size_t nt;  // 0 when no transcript backs the profile
        };
        const ProfileCase cases[] = {{&two, 0},
                                     {&three, 0},
                                     {&uniform, simple_cfg.K * simple_cfg.T},
                                     {&clean, cond_cfg.K * cond_cfg.T},
                                     {&tight, cond_cfg.K * cond_cfg.T}};
        std::size_t profile_idx = 0;
        for (const ProfileCase& pc : cases) {
            double impl = effective_sample_size(*pc.profile);
            double brute = brute_force_neff(*pc.profile);
            bool agree = close_rel(impl, brute, kNeffRelTol);
            bool cauchy_ok = true;
            if (pc.nt > 0) {
                double cauchy = static_cast<double>(pc.nt) /
                                ((1.0 - pc.profile->rho) * (1.0 - pc.profile->rho));
                cauchy_ok = impl <= cauchy * (1.0 + 1e-12);
            }
            r.pass = r.pass && agree && cauchy_ok;
            if (!agree || !cauchy_ok)
                r.detail += fmt("profile %zu: impl %.12f brute %.12f%s; ", profile_idx, impl,
                                brute, cauchy_ok ? "" : " cauchy FAIL");
            ++profile_idx;
        }

        std::vector<QueryEmbedding> queries;
        for (const TranscriptRecord& rec : cond.records) queries.push_back(rec.q);
        for (double audit_radius : {cond_cfg.queries.radius, 0.4}) {
            CompressionReport audit =
                audit_transcript(model, queries, CenterAssignment{centers, audit_radius});
            bool occ_ok = audit.occupied_buckets <= kBiasCenters + audit.bad_queries;
            r.pass = r.pass && occ_ok;
            r.detail += fmt("audit R=%.1f: %zu buckets, %zu bad (|B| <= N+M %s); ", audit_radius,
                            audit.occupied_buckets, audit.bad_queries, occ_ok ? "ok" : "FAIL");
        }

        ExperimentConfig iid_cfg = SweepConfig::preset("prop1").base;
        iid_cfg.regime = Regime::iid;
        iid_cfg.K = 4;
        iid_cfg.T = 50;
        PointResult iid_row = run_point(iid_cfg, 0);
        r.pass = r.pass && iid_row.n_eff == 200.0;
        r.detail += fmt("uniform n_eff %.6f (T=50), iid n_eff %.0f (KT=200), tight rho %.4f",
                        effective_sample_size(uniform), iid_row.n_eff, tight.rho);
    });
}

CheckResult VerifySuite::alignment() {
    return timed_check("7-align", [&](CheckResult& r) {
        QueryModel model;
        for (std::size_t j = 0; j < 4; ++j) {
            QueryEmbedding c(8, 0.0);
            c[j] = 3.0;
            model.centers.push_back(c);
        }
        model.radius = 0.5;
        BucketModel buckets = BucketModel::nearest_center(model.centers, model.radius);
        AlignmentReport rep =
            alignment_fluctuation(model, buckets, kAlignM, kAlignDelta, kAlignReps, Seed{2024});
        double expected_bound =
            std::sqrt(std::log(2.0 * 4.0 / kAlignDelta) / (2.0 * static_cast<double>(kAlignM)));
        bool bound_ok = std::fabs(rep.bound - expected_bound) <= 1e-15;
        bool rate_ok = rep.violation_rate <= kAlignDelta + kAlignSlack;
        r.pass = bound_ok && rate_ok;
        r.detail = fmt("violations %zu/%zu (rate %.4f <= %.2f), bound %.6f matches closed form, "
                       "median max dev %.6f",
                       rep.violations, rep.repetitions, rep.violation_rate,
                       kAlignDelta + kAlignSlack, rep.bound, rep.median_max_dev);
    });
}

CheckResult VerifySuite::bias() {
    return timed_check("8-bias", [&](CheckResult& r) {
        SoftmaxTokenTeacher teacher = random_softmax_teacher(
            Seed{kBiasTeacherSeed}, 8, 8, kBiasW, kBiasCenterNorm + 2.0, 1.0);
        std::vector<QueryEmbedding> centers = bias_centers(teacher);

        double min_dist = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < centers.size(); ++a) {
            for (std::size_t b = a + 1; b < centers.size(); ++b) {
                double d2 = 0.0;
                for (std::size_t j = 0; j < centers[a].size(); ++j)
                    d2 += (centers[a][j] - centers[b][j]) * (centers[a][j] - centers[b][j]);
                min_dist = std::min(min_dist, std::sqrt(d2));
            }
        }
        const double max_radius = kBiasRadii[3];
        bool disjoint = min_dist > 2.0 * max_radius;

        std::vector<double> med_coupled, med_fresh, med_margin;
        for (double radius : kBiasRadii) {
            std::vector<PointResult> coupled = grid_rows(bias_config(centers, radius, 1.0),
                                                         Regime::lads, kBiasK, kBiasT, 1.0,
                                                         kBiasReps, opts_.parallelism);
            std::vector<PointResult> fresh = grid_rows(bias_config(centers, radius, 0.0),
                                                       Regime::lads, kBiasK, kBiasT, 0.0,
                                                       kBiasReps, opts_.parallelism);
            std::vector<double> pop1, pop0, margin(kBiasReps);
            for (const PointResult& row : coupled) pop1.push_back(row.pop_loss);
            for (const PointResult& row : fresh) pop0.push_back(row.pop_loss);
            // Repetition seeds are alpha-independent, so rows pair by rep.
            for (std::size_t i = 0; i < kBiasReps; ++i)
                margin[i] = coupled[i].pop_loss - fresh[i].pop_loss;
            med_coupled.push_back(stats::median(pop1));
            med_fresh.push_back(stats::median(pop0));
            med_margin.push_back(stats::median(margin));
        }
        bool coupled_monotone = true, fresh_monotone = true, margin_positive = true;
        for (std::size_t i = 0; i + 1 < med_coupled.size(); ++i) {
            coupled_monotone = coupled_monotone && med_coupled[i + 1] >= med_coupled[i];
            fresh_monotone = fresh_monotone && med_fresh[i + 1] >= med_fresh[i];
        }
        for (double m : med_margin) margin_positive = margin_positive && m > 0.0;

        // Point-mass reduction: the conditional pipeline at N=1, R=0 must
        // land inside the coupled regime's own bootstrap band.
        ExperimentConfig reduction_base = SweepConfig::preset("prop1").base;
        reduction_base.regime = Regime::lads;
        reduction_base.alpha = 1.0;
        const SweepReport& sweep = prop1();
        bool reduction_ok = true;
        std::string reduction_note;
        for (std::size_t t : {64, 256, 1024}) {
            std::vector<PointResult> red = grid_rows(reduction_base, Regime::lads, 16, t, 1.0,
                                                     kBiasReps, opts_.parallelism);
            std::vector<double> red_gaps;
            for (const PointResult& row : red) {
                red_gaps.push_back(row.gap);
                reduction_ok = reduction_ok && row.n_eff == static_cast<double>(t) &&
                               row.rho == 0.0;
            }
            std::vector<double> simple_gaps;
            for (const PointResult& row : sweep.rows) {
                if (row.regime == Regime::lads_simple && row.K == 16 && row.T == t)
                    simple_gaps.push_back(row.gap);
            }
            auto [lo, hi] = bootstrap_median_ci(simple_gaps, 400, Seed{0x5245445543ull ^ t});
            double med_red = stats::median(red_gaps);
            bool inside = med_red >= lo && med_red <= hi;
            reduction_ok = reduction_ok && inside;
            reduction_note += fmt("T%zu %.4f in [%.4f, %.4f]%s; ", t, med_red, lo, hi,
                                  inside ? "" : " FAIL");
        }

        r.pass = disjoint && fresh_monotone && coupled_monotone && margin_positive && reduction_ok;
        r.detail = fmt("centers %.2f apart (> %.1f); coupled loss %.5f/%.5f/%.5f/%.5f%s; "
                       "reference monotone %s; margins %+.4f/%+.4f/%+.4f/%+.4f; reduction %s",
                       min_dist, 2.0 * max_radius, med_coupled[0], med_coupled[1], med_coupled[2],
                       med_coupled[3], coupled_monotone ? "" : " NOT MONOTONE",
                       fresh_monotone ? "yes" : "NO", med_margin[0], med_margin[1], med_margin[2],
                       med_margin[3], reduction_note.c_str());
    });
}

CheckResult VerifySuite::determinism() {
    return timed_check("9-determinism", [&](CheckResult& r) {
        namespace fs = std::filesystem;
        std::string stem = (fs::temp_directory_path() /
                            ("lads-verify-" + std::to_string(::getpid()))).string();

        SimulateSpec spec;
        spec.sweep.base = SweepConfig::preset("prop1").base;
        spec.sweep.regimes = {Regime::iid, Regime::lads_simple};
        spec.sweep.Ks = {1, 4};
        spec.sweep.Ts = {64};
        spec.sweep.alphas = {1.0};
        spec.sweep.repetitions = 20;
        spec.sweep.parallelism = opts_.parallelism;

        SimulateOutcome a = simulate_to_dir(spec, stem + "-a");
        SimulateOutcome b = simulate_to_dir(spec, stem + "-b");
        bool csv_equal = read_bytes(a.csv_path) == read_bytes(b.csv_path);
        bool summary_equal = read_bytes(a.summary_path) == read_bytes(b.summary_path);

        // Single-repetition grids skip the fit stage but must still be
        // byte-stable across invocations.
        SimulateSpec single = spec;
        single.sweep.repetitions = 1;
        SimulateOutcome c = simulate_to_dir(single, stem + "-c");
        SimulateOutcome d = simulate_to_dir(single, stem + "-d");
        bool single_equal = read_bytes(c.csv_path) == read_bytes(d.csv_path);

        for (const char* suffix : {"-a", "-b", "-c", "-d"}) {
            std::error_code ec;
            fs::remove_all(stem + suffix, ec);
        }
        r.pass = csv_equal && summary_equal && single_equal;
        r.detail = fmt("csv identical %s, summary identical %s, single-rep csv identical %s "
                       "(%zu rows)",
                       csv_equal ? "yes" : "NO", summary_equal ? "yes" : "NO",
                       single_equal ? "yes" : "NO", a.report.rows.size());
    });
}

std::vector<CheckResult> VerifySuite::run() {
    struct Entry {
        const char* id;
        CheckResult (VerifySuite::*check)();
    };
    const Entry entries[] = {
        {"1-losslessness", &VerifySuite::losslessness},
        {"2-coupling", &VerifySuite::coupling},
        {"3-collapse", &VerifySuite::collapse},
        {"4-separation", &VerifySuite::separation},
        {"5-rademacher", &VerifySuite::rademacher},
        {"6-neff", &VerifySuite::sample_size},
        {"7-align", &VerifySuite::alignment},
        {"8-bias", &VerifySuite::bias},
        {"9-determinism", &VerifySuite::determinism},
    };
    std::vector<CheckResult> results;
    for (const Entry& entry : entries) {
        if (!opts_.only.empty()) {
            bool wanted = false;
            for (const std::string& token : opts_.only)
                wanted = wanted || std::string(entry.id).find(token) != std::string::npos;
            if (!wanted) continue;
        }
        results.push_back((this->*entry.check)());
    }
    return results;
}

std::string render_report(const std::vector<CheckResult>& results) {
    static const std::map<std::string, std::string> names = {
        {"1-losslessness", "losslessness"},
        {"2-coupling", "coupling exactness"},
        {"3-collapse", "sample-collapse scaling"},
        {"4-separation", "sqrt(K) separation"},
        {"5-rademacher", "Rademacher bound"},
        {"6-neff", "effective sample size"},
        {"7-align", "cluster-weight alignment"},
        {"8-bias", "radius bias visibility"},
        {"9-determinism", "determinism"},
    };
    std::string out;
    for (const CheckResult& r : results) {
        auto it = names.find(r.id);
        out += fmt("criterion %s (%s): %s - %s (%.1fs)\n", r.id.c_str(),
                   it == names.end() ? "?" : it->second.c_str(), r.pass ? "PASS" : "FAIL",
                   r.detail.c_str(), r.seconds);
    }
    return out;
}

std::string report_json(const std::vector<CheckResult>& results) {
    nlohmann::json arr = nlohmann::json::array();
    for (const CheckResult& r : results)
        arr.push_back({{"id", r.id}, {"pass", r.pass}, {"detail", r.detail},
                       {"seconds", r.seconds}});
    return nlohmann::json{{"checks", arr}, {"pass", all_passed(results)}}.dump(2);
}

bool all_passed(const std::vector<CheckResult>& results) {
    if (results.empty()) return false;
    for (const CheckResult& r : results)
        if (!r.pass) return false;
    return true;
}

}  // namespace lads
