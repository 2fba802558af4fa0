#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstring>
#include <mutex>
#include <thread>
#include <unordered_map>

#include <json.hpp>

#include "lads/error.hpp"
#include "lads/experiment.hpp"
#include "lads/philox.hpp"

namespace lads {
namespace {

constexpr std::uint64_t kProbeDomain = 0x4c41445350524f42ull;
constexpr std::uint64_t kBootDomain = 0x4c414453424f4f54ull;

std::string fmt_double(double x) {
    char buf[40];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, ptr);
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// Holdout evaluation set: Monte Carlo queries plus the teacher's exact token
// distribution at each. A point-mass query model collapses to one entry.
struct Holdout {
    std::vector<QueryEmbedding> qs;
    std::vector<std::vector<double>> probs;
    bool exact = false;  // true when the query distribution is a point mass
};

SoftmaxTokenTeacher config_teacher(const ExperimentConfig& cfg) {
    if (cfg.teacher_kind != TeacherKind::token)
        throw error(errc::invalid_argument, "this operation needs the token teacher");
    return random_softmax_teacher(Seed{cfg.teacher_seed}, cfg.vocab, cfg.q_dim, cfg.W,
                                  cfg.input_bound(), cfg.teacher_scale);
}

Holdout make_holdout(const ExperimentConfig& cfg, std::size_t n_holdout, Seed query_seed) {
    if (n_holdout < 10000)
        throw error(errc::invalid_argument, "n_holdout must be at least 10^4");
    SoftmaxTokenTeacher teacher = config_teacher(cfg);
    Holdout h;
    if (cfg.queries.centers.size() == 1 && cfg.queries.radius == 0.0) {
        h.exact = true;
        h.qs.push_back(cfg.queries.centers[0]);
        h.probs.push_back(teacher.token_probs(h.qs[0]));
        return h;
    }
    SampleStream stream(query_seed);
    h.qs.reserve(n_holdout);
    h.probs.reserve(n_holdout);
    for (std::size_t i = 0; i < n_holdout; ++i) {
        h.qs.push_back(stream.draw_query(cfg.queries));
        h.probs.push_back(teacher.token_probs(h.qs.back()));
    }
    return h;
}

// E_x|q ell(theta; q, x) summed exactly over tokens: lse(theta q) - <p, theta q>.
double expected_loss_at(const Matrix& theta, const QueryEmbedding& q,
                        const std::vector<double>& probs) {
    std::vector<double> z = matvec(theta, q);
    double lse = log_sum_exp(z);
    double dot = 0.0;
    for (std::size_t y = 0; y < z.size(); ++y) dot += probs[y] * z[y];
    return lse - dot;
}

PopulationEstimate holdout_loss(const Matrix& theta, const Holdout& h) {
    if (h.exact) return PopulationEstimate{expected_loss_at(theta, h.qs[0], h.probs[0]), 0.0};
    double mean = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < h.qs.size(); ++i) {
        double li = expected_loss_at(theta, h.qs[i], h.probs[i]);
        double delta = li - mean;
        mean += delta / static_cast<double>(i + 1);
        m2 += delta * (li - mean);
    }
    double n = static_cast<double>(h.qs.size());
    return PopulationEstimate{mean, std::sqrt(m2 / (n - 1.0) / n)};
}

GapReport gap_with_holdout(const Matrix& theta, const Transcript& tr, const Holdout& holdout,
                           const std::vector<Matrix>& probes) {
    GapReport out;
    out.train_loss = transcript_loss(theta, tr);
    PopulationEstimate pe = holdout_loss(theta, holdout);
    out.pop_loss = pe.loss;
    out.pop_se = pe.se;
    out.gap_at_theta = std::fabs(out.train_loss - out.pop_loss);
    out.sup_gap = out.gap_at_theta;
    for (const Matrix& probe : probes) {
        double g = std::fabs(transcript_loss(probe, tr) - holdout_loss(probe, holdout).loss);
        out.sup_gap = std::max(out.sup_gap, g);
    }
    return out;
}

}  // namespace

std::vector<TokenSample> aggregate_samples(const Transcript& tr) {
    if (tr.teacher_kind != TeacherKind::token)
        throw error(errc::invalid_argument, "training needs a token transcript");
    if (tr.records.empty()) throw error(errc::empty_input, "empty transcript");
    std::vector<TokenSample> samples;
    std::unordered_map<std::string, std::size_t> index;
    index.reserve(tr.records.size() * 2);
    for (const TranscriptRecord& rec : tr.records) {
        std::string key(rec.q.size() * sizeof(double) + sizeof(rec.token), '\0');
        if (!rec.q.empty())
            std::memcpy(key.data(), rec.q.data(), rec.q.size() * sizeof(double));
        std::memcpy(key.data() + rec.q.size() * sizeof(double), &rec.token, sizeof(rec.token));
        auto [it, fresh] = index.emplace(std::move(key), samples.size());
        if (fresh)
            samples.push_back(TokenSample{rec.q, rec.token, 1.0});
        else
            samples[it->second].weight += 1.0;
    }
    return samples;
}

TrainResult train_student(const Transcript& tr, const ExperimentConfig& cfg) {
    std::vector<TokenSample> samples = aggregate_samples(tr);
    PgdOptions opts;
    opts.steps = cfg.steps;
    opts.step_size = cfg.step_size;
    opts.frobenius_radius = cfg.W;
    Matrix init(cfg.vocab, cfg.q_dim);
    TrainResult out;
    out.theta = pgd_minimize(samples, std::move(init), opts);
    out.train_loss = dataset_loss(out.theta, samples);
    return out;
}

double transcript_loss(const Matrix& theta, const Transcript& tr) {
    if (tr.teacher_kind != TeacherKind::token)
        throw error(errc::invalid_argument, "loss needs a token transcript");
    if (tr.records.empty()) throw error(errc::empty_input, "empty transcript");
    double sum = 0.0;
    for (const TranscriptRecord& rec : tr.records) sum += cross_entropy(theta, rec.q, rec.token);
    return sum / static_cast<double>(tr.records.size());
}

PopulationEstimate population_loss(const Matrix& theta, const ExperimentConfig& cfg,
                                   std::size_t n_holdout, Seed query_seed) {
    return holdout_loss(theta, make_holdout(cfg, n_holdout, query_seed));
}

std::vector<Matrix> probe_set(const ExperimentConfig& cfg) {
    // Rank-1 probes u d^T with d a unit query-center direction and u a random
    // token direction of norm W. An isotropic Frobenius draw spreads its norm
    // over all input dimensions and delivers |theta q| ~ W/sqrt(q_dim) at the
    // queries, too weak a lower bound on the sup; aligning the input factor
    // with the query mass keeps the probe inside the ball while restoring the
    // full W of logit swing, so the probe term dominates the trained point's
    // O(1/n) overfit term on every grid point.
    std::vector<Matrix> probes;
    probes.reserve(cfg.probes);
    const std::size_t n_centers = cfg.queries.centers.size();
    for (std::size_t i = 0; i < cfg.probes; ++i) {
        std::uint64_t w = philox::encrypt({i, 0, 0, 0}, {cfg.master_seed, kProbeDomain})[0];
        Matrix u = random_matrix(Seed{w}, cfg.vocab, 1, 1.0);
        double un = frobenius_norm(u);
        if (un > 0.0)
            for (double& v : u.data) v *= cfg.W / un;

        QueryEmbedding d = cfg.queries.centers[i % n_centers];
        double dn = 0.0;
        for (double v : d) dn += v * v;
        dn = std::sqrt(dn);
        if (dn < 1e-12) {
            // Center at the origin carries no direction; probe the first axis.
            d.assign(cfg.q_dim, 0.0);
            d[0] = 1.0;
        } else {
            for (double& v : d) v /= dn;
        }

        Matrix m(cfg.vocab, cfg.q_dim);
        for (std::size_t r = 0; r < cfg.vocab; ++r)
            for (std::size_t c = 0; c < cfg.q_dim; ++c) m.data[r * cfg.q_dim + c] = u.data[r] * d[c];
        probes.push_back(std::move(m));
    }
    return probes;
}

GapReport measure_gap(const Matrix& theta, const Transcript& tr, const ExperimentConfig& cfg,
                      std::size_t n_holdout, Seed holdout_seed,
                      const std::vector<Matrix>& probes) {
    return gap_with_holdout(theta, tr, make_holdout(cfg, n_holdout, holdout_seed), probes);
}

GapReport measure_gap(const Matrix& theta, const Transcript& tr, const ExperimentConfig& cfg,
                      std::size_t n_holdout) {
    Seed holdout_seed{rep_seeds(cfg, tr.rep).holdout_seed};
    return measure_gap(theta, tr, cfg, n_holdout, holdout_seed, probe_set(cfg));
}

GapReport measure_gap_pairs(const Matrix& theta, const Transcript& tr,
                            const std::vector<TokenSample>& eval_pairs) {
    if (eval_pairs.empty()) throw error(errc::empty_input, "empty evaluation set");
    GapReport out;
    out.train_loss = transcript_loss(theta, tr);
    double sum = 0.0, weight = 0.0;
    for (const TokenSample& s : eval_pairs) {
        sum += s.weight * cross_entropy(theta, s.q, s.y);
        weight += s.weight;
    }
    out.pop_loss = sum / weight;
    out.gap_at_theta = std::fabs(out.train_loss - out.pop_loss);
    out.sup_gap = out.gap_at_theta;
    return out;
}

PointResult run_point(const ExperimentConfig& cfg, std::size_t rep) {
    if (cfg.teacher_kind != TeacherKind::token)
        throw error(errc::config_invalid, "grid experiments need the token teacher");
    Transcript tr = build_transcript(cfg, rep);
    TrainResult trained = train_student(tr, cfg);
    Seed holdout_seed{rep_seeds(cfg, rep).holdout_seed};
    GapReport gap =
        gap_with_holdout(trained.theta, tr, make_holdout(cfg, cfg.n_holdout, holdout_seed),
                         probe_set(cfg));
    PointResult out;
    out.regime = cfg.regime;
    out.K = cfg.K;
    out.T = cfg.T;
    out.alpha = cfg.alpha;
    out.rep = rep;
    out.train_loss = gap.train_loss;
    out.pop_loss = gap.pop_loss;
    out.gap = gap.sup_gap;
    out.distinct = distinct_noise_count(tr);
    switch (cfg.regime) {
        case Regime::iid:
            // Fresh noise per request: every record is its own cell.
            out.n_eff = static_cast<double>(cfg.K * cfg.T);
            out.rho = 0.0;
            break;
        case Regime::lads_simple:
            out.n_eff = effective_sample_size(weight_profile(tr));
            out.rho = 0.0;
            break;
        case Regime::lads: {
            BucketModel model =
                BucketModel::nearest_center(cfg.queries.centers, cfg.cover_radius());
            CenterAssignment task{cfg.queries.centers, cfg.cover_radius()};
            WeightProfile profile = weight_profile(tr, model, task);
            out.n_eff = effective_sample_size(profile);
            out.rho = profile.rho;
            break;
        }
    }
    return out;
}

std::vector<PointResult> run_grid(const SweepConfig& sweep) {
    sweep.validate();
    struct Job {
        ExperimentConfig cfg;
        std::size_t rep;
    };
    std::vector<Job> jobs;
    for (Regime regime : sweep.regimes)
        for (std::size_t k : sweep.Ks)
            for (std::size_t t : sweep.Ts)
                for (double alpha : sweep.alphas)
                    for (std::size_t rep = 0; rep < sweep.repetitions; ++rep) {
                        ExperimentConfig cfg = sweep.base;
                        cfg.regime = regime;
                        cfg.K = k;
                        cfg.T = t;
                        cfg.alpha = alpha;
                        cfg.repetitions = sweep.repetitions;
                        jobs.push_back(Job{std::move(cfg), rep});
                    }
    std::vector<PointResult> rows(jobs.size());
    std::size_t workers = sweep.parallelism ? sweep.parallelism
                                            : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, jobs.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mu;
    auto work = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            try {
                rows[i] = run_point(jobs[i].cfg, jobs[i].rep);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (std::thread& th : pool) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);
    return rows;
}

std::string results_csv(const std::vector<PointResult>& rows) {
    std::string out = "regime,K,T,alpha,rep,train_loss,pop_loss,gap,n_eff,distinct,rho\n";
    for (const PointResult& r : rows) {
        out += regime_name(r.regime);
        out += ',';
        out += std::to_string(r.K);
        out += ',';
        out += std::to_string(r.T);
        out += ',';
        out += fmt_double(r.alpha);
        out += ',';
        out += std::to_string(r.rep);
        out += ',';
        out += fmt_double(r.train_loss);
        out += ',';
        out += fmt_double(r.pop_loss);
        out += ',';
        out += fmt_double(r.gap);
        out += ',';
        out += fmt_double(r.n_eff);
        out += ',';
        out += std::to_string(r.distinct);
        out += ',';
        out += fmt_double(r.rho);
        out += '\n';
    }
    return out;
}

namespace {

double x_value(const PointResult& r, GapAxis axis) {
    switch (axis) {
        case GapAxis::kt: return static_cast<double>(r.K * r.T);
        case GapAxis::k: return static_cast<double>(r.K);
        case GapAxis::t: return static_cast<double>(r.T);
    }
    throw error(errc::invalid_argument, "unknown gap axis");
}

struct GridPoint {
    double x = 0.0;
    std::vector<double> gaps;
};

SlopeFit fit_points(std::vector<GridPoint>& points, std::size_t n_boot, Seed boot_seed) {
    std::vector<double> xs, ys;
    for (GridPoint& p : points) {
        double med = stats::median(p.gaps);
        if (!(med > 0.0))
            throw error(errc::numeric_failure, "nonpositive median gap; cannot take logs");
        xs.push_back(std::log(p.x));
        ys.push_back(std::log(med));
    }
    stats::LineFit fit = stats::fit_line(xs, ys);
    SlopeFit out;
    out.slope = fit.slope;
    out.intercept = fit.intercept;
    out.points = points.size();
    SampleStream stream(boot_seed);
    std::vector<double> boot_slopes;
    boot_slopes.reserve(n_boot);
    std::vector<double> bys(points.size());
    std::vector<double> resample;
    for (std::size_t b = 0; b < n_boot; ++b) {
        for (std::size_t p = 0; p < points.size(); ++p) {
            const std::vector<double>& gaps = points[p].gaps;
            resample.resize(gaps.size());
            for (double& g : resample) {
                double u = stream.next_uniform();
                std::size_t pick = std::min(
                    static_cast<std::size_t>(u * static_cast<double>(gaps.size())),
                    gaps.size() - 1);
                g = gaps[pick];
            }
            double med = stats::median(resample);
            bys[p] = std::log(std::max(med, 1e-300));
        }
        boot_slopes.push_back(stats::fit_line(xs, bys).slope);
    }
    std::sort(boot_slopes.begin(), boot_slopes.end());
    auto pick_quantile = [&](double q) {
        double idx = q * static_cast<double>(boot_slopes.size() - 1);
        return boot_slopes[static_cast<std::size_t>(idx + 0.5)];
    };
    out.ci_lo = pick_quantile(0.025);
    out.ci_hi = pick_quantile(0.975);
    return out;
}

}  // namespace

SlopeFit gap_slope(const std::vector<PointResult>& rows, GapAxis axis, std::size_t n_boot,
                   Seed boot_seed) {
    if (rows.empty()) throw error(errc::empty_input, "no rows to fit");
    std::map<std::pair<std::size_t, std::size_t>, GridPoint> by_kt;
    for (const PointResult& r : rows) {
        GridPoint& p = by_kt[{r.K, r.T}];
        p.x = x_value(r, axis);
        p.gaps.push_back(r.gap);
    }
    std::vector<GridPoint> points;
    points.reserve(by_kt.size());
    for (auto& [key, p] : by_kt) points.push_back(std::move(p));
    std::vector<double> distinct_x;
    for (const GridPoint& p : points) distinct_x.push_back(p.x);
    std::sort(distinct_x.begin(), distinct_x.end());
    distinct_x.erase(std::unique(distinct_x.begin(), distinct_x.end()), distinct_x.end());
    if (distinct_x.size() < 2)
        throw error(errc::invalid_argument, "slope fit needs at least two distinct x values");
    return fit_points(points, n_boot, boot_seed);
}

SweepReport scaling_sweep(const SweepConfig& sweep) {
    sweep.validate();
    if (sweep.repetitions < kMinFitRepetitions)
        throw error(errc::config_invalid, "scaling sweeps need at least 20 repetitions");
    SweepReport report;
    report.rows = run_grid(sweep);

    auto boot_seed_for = [&](const std::string& label) {
        return Seed{
            philox::encrypt({fnv1a(label), 0, 0, 0}, {sweep.base.master_seed, kBootDomain})[0]};
    };
    auto subset = [&](Regime regime, double alpha, std::size_t fixed_k, std::size_t fixed_t) {
        std::vector<PointResult> out;
        for (const PointResult& r : report.rows) {
            if (r.regime != regime || r.alpha != alpha) continue;
            if (fixed_k && r.K != fixed_k) continue;
            if (fixed_t && r.T != fixed_t) continue;
            out.push_back(r);
        }
        return out;
    };
    auto distinct_count = [&](const std::vector<PointResult>& rows, GapAxis axis) {
        std::vector<double> xs;
        for (const PointResult& r : rows) xs.push_back(x_value(r, axis));
        std::sort(xs.begin(), xs.end());
        xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
        return xs.size();
    };

    for (Regime regime : sweep.regimes) {
        for (double alpha : sweep.alphas) {
            std::string prefix = regime_name(regime);
            if (sweep.alphas.size() > 1) prefix += "_alpha" + fmt_double(alpha);
            std::vector<PointResult> all = subset(regime, alpha, 0, 0);
            if (distinct_count(all, GapAxis::kt) >= 4) {
                std::string label = prefix + "_gap_vs_KT";
                report.slopes[label] =
                    gap_slope(all, GapAxis::kt, sweep.bootstrap, boot_seed_for(label));
            }
            for (std::size_t t : sweep.Ts) {
                std::vector<PointResult> rows_t = subset(regime, alpha, 0, t);
                if (distinct_count(rows_t, GapAxis::k) < 4) continue;
                std::string label = prefix + "_gap_vs_K_at_T" + std::to_string(t);
                report.slopes[label] =
                    gap_slope(rows_t, GapAxis::k, sweep.bootstrap, boot_seed_for(label));
            }
            for (std::size_t k : sweep.Ks) {
                std::vector<PointResult> rows_k = subset(regime, alpha, k, 0);
                if (distinct_count(rows_k, GapAxis::t) < 4) continue;
                std::string label = prefix + "_gap_vs_T_at_K" + std::to_string(k);
                report.slopes[label] =
                    gap_slope(rows_k, GapAxis::t, sweep.bootstrap, boot_seed_for(label));
            }
        }
    }

    // Matched-(K, T) median-gap ratios between the coupled-simple and iid regimes.
    bool has_simple = std::count(sweep.regimes.begin(), sweep.regimes.end(),
                                 Regime::lads_simple) > 0;
    bool has_iid = std::count(sweep.regimes.begin(), sweep.regimes.end(), Regime::iid) > 0;
    if (has_simple && has_iid) {
        for (double alpha : sweep.alphas)
            for (std::size_t k : sweep.Ks)
                for (std::size_t t : sweep.Ts) {
                    std::vector<double> g_simple, g_iid;
                    for (const PointResult& r : report.rows) {
                        if (r.K != k || r.T != t || r.alpha != alpha) continue;
                        if (r.regime == Regime::lads_simple) g_simple.push_back(r.gap);
                        if (r.regime == Regime::iid) g_iid.push_back(r.gap);
                    }
                    if (g_simple.empty() || g_iid.empty()) continue;
                    std::string label = "gap_ratio_simple_over_iid_K" + std::to_string(k) +
                                        "_T" + std::to_string(t);
                    if (sweep.alphas.size() > 1) label += "_alpha" + fmt_double(alpha);
                    report.scalars[label] =
                        stats::median(g_simple) / stats::median(g_iid);
                }
    }
    return report;
}

std::string SweepReport::summary_json() const {
    nlohmann::json j;
    for (const auto& [label, fit] : slopes)
        j["slopes"][label] = {{"slope", fit.slope},
                              {"intercept", fit.intercept},
                              {"ci_lo", fit.ci_lo},
                              {"ci_hi", fit.ci_hi},
                              {"points", fit.points}};
    for (const auto& [label, value] : scalars) j["scalars"][label] = value;
    return j.dump(2);
}

namespace {

double max_weight_deviation(const QueryModel& queries, const BucketModel& model, std::size_t m,
                            SampleStream& stream) {
    const std::size_t n = queries.centers.size();
    std::vector<std::size_t> counts(n, 0);
    for (std::size_t i = 0; i < m; ++i) {
        BucketId b = assign_bucket(model, stream.draw_query(queries));
        if (b < n) ++counts[b];
    }
    double dev = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double w = static_cast<double>(counts[j]) / static_cast<double>(m);
        dev = std::max(dev, std::fabs(w - 1.0 / static_cast<double>(n)));
    }
    return dev;
}

void check_alignment_inputs(const QueryModel& queries, const BucketModel& model) {
    if (queries.centers.empty()) throw error(errc::empty_input, "query model has no centers");
    if (model.mode() != BucketModel::Mode::nearest_center)
        throw error(errc::unknown_mode, "alignment check needs a nearest-center model");
    if (model.centers().size() != queries.centers.size())
        throw error(errc::invalid_argument, "bucket model and query model center counts differ");
}

}  // namespace

AlignmentReport alignment_fluctuation(const QueryModel& queries, const BucketModel& model,
                                      std::size_t M, double delta, std::size_t reps, Seed seed) {
    check_alignment_inputs(queries, model);
    if (M < 1 || reps < 1) throw error(errc::invalid_argument, "M and reps must be positive");
    if (!(delta > 0.0 && delta < 1.0))
        throw error(errc::invalid_argument, "delta must lie in (0, 1)");
    const double n = static_cast<double>(queries.centers.size());
    AlignmentReport out;
    out.repetitions = reps;
    out.bound = std::sqrt(std::log(2.0 * n / delta) / (2.0 * static_cast<double>(M)));
    SampleStream stream(seed);
    std::vector<double> devs;
    devs.reserve(reps);
    for (std::size_t r = 0; r < reps; ++r) {
        double dev = max_weight_deviation(queries, model, M, stream);
        devs.push_back(dev);
        if (dev > out.bound) ++out.violations;
    }
    out.violation_rate = static_cast<double>(out.violations) / static_cast<double>(reps);
    out.median_max_dev = stats::median(devs);
    return out;
}

SlopeFit alignment_scaling(const QueryModel& queries, const BucketModel& model,
                           const std::vector<std::size_t>& Ms, std::size_t reps, Seed seed) {
    check_alignment_inputs(queries, model);
    if (Ms.size() < 2) throw error(errc::invalid_argument, "need at least two M values");
    SampleStream stream(seed);
    std::vector<GridPoint> points;
    for (std::size_t m : Ms) {
        GridPoint p;
        p.x = static_cast<double>(m);
        for (std::size_t r = 0; r < reps; ++r)
            p.gaps.push_back(max_weight_deviation(queries, model, m, stream));
        points.push_back(std::move(p));
    }
    return fit_points(points, 200, Seed{seed.value ^ kBootDomain});
}

}  // namespace lads
