#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "lads/error.hpp"
#include "lads/experiment.hpp"
#include "lads/stats.hpp"

using namespace lads;

namespace {

ExperimentConfig unconditional_cfg(Regime regime, std::size_t k, std::size_t t) {
    ExperimentConfig cfg;
    cfg.regime = regime;
    cfg.K = k;
    cfg.T = t;
    cfg.alpha = 1.0;
    cfg.q_dim = 8;
    cfg.vocab = 8;
    cfg.queries.centers = {QueryEmbedding(8, 1.0 / std::sqrt(8.0))};
    cfg.queries.radius = 0.0;
    cfg.teacher_seed = 7;
    cfg.master_seed = 11;
    return cfg;
}

ExperimentConfig conditional_cfg(std::size_t k, std::size_t t, double radius,
                                 std::size_t n_centers = 4) {
    ExperimentConfig cfg;
    cfg.regime = Regime::lads;
    cfg.K = k;
    cfg.T = t;
    cfg.alpha = 1.0;
    cfg.q_dim = 8;
    cfg.vocab = 8;
    for (std::size_t j = 0; j < n_centers; ++j) {
        QueryEmbedding c(8, 0.0);
        c[j] = 3.0;
        cfg.queries.centers.push_back(c);
    }
    cfg.queries.radius = radius;
    cfg.teacher_seed = 7;
    cfg.master_seed = 11;
    return cfg;
}

}  // namespace

TEST_CASE("config validation and json round trip") {
    ExperimentConfig cfg = unconditional_cfg(Regime::iid, 2, 3);
    CHECK_NOTHROW(cfg.validate());

    ExperimentConfig back = ExperimentConfig::from_json(cfg.to_json());
    CHECK(back.regime == cfg.regime);
    CHECK(back.K == cfg.K);
    CHECK(back.T == cfg.T);
    CHECK(back.queries.centers == cfg.queries.centers);
    CHECK(back.master_seed == cfg.master_seed);

    ExperimentConfig bad = cfg;
    bad.alpha = 1.5;
    CHECK_THROWS_AS(bad.validate(), error);
    bad = cfg;
    bad.queries.centers.clear();
    CHECK_THROWS_AS(bad.validate(), error);
    bad = cfg;
    bad.queries.radius = 0.5;  // unconditional regimes demand a point mass
    CHECK_THROWS_AS(bad.validate(), error);
    bad = cfg;
    bad.n_holdout = 999;
    CHECK_THROWS_AS(bad.validate(), error);
    bad = cfg;
    bad.vocab = 1;
    CHECK_THROWS_AS(bad.validate(), error);

    // R_x = max center norm + radius; B = log Y + 2 R_x W.
    CHECK(cfg.input_bound() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cfg.loss_bound() == doctest::Approx(std::log(8.0) + 2.0).epsilon(1e-12));

    SweepConfig preset = SweepConfig::preset("prop1");
    CHECK_NOTHROW(preset.validate());
    CHECK(preset.Ks.size() == 4);
    CHECK(preset.Ts.size() == 3);
    SweepConfig sweep_back = SweepConfig::from_json(preset.to_json());
    CHECK(sweep_back.Ks == preset.Ks);
    CHECK(sweep_back.regimes == preset.regimes);
    CHECK_THROWS_AS(SweepConfig::preset("nope"), error);
}

TEST_CASE("rep seeds differ across reps and regimes, repeat exactly") {
    ExperimentConfig cfg = unconditional_cfg(Regime::iid, 4, 16);
    RepSeeds a = rep_seeds(cfg, 0);
    RepSeeds b = rep_seeds(cfg, 1);
    CHECK(a.gateway_key != b.gateway_key);
    CHECK(a.query_seed != b.query_seed);
    ExperimentConfig other = cfg;
    other.regime = Regime::lads_simple;
    RepSeeds c = rep_seeds(other, 0);
    CHECK(c.gateway_key != a.gateway_key);
    RepSeeds again = rep_seeds(cfg, 0);
    CHECK(again.gateway_key == a.gateway_key);
    CHECK(again.holdout_seed == a.holdout_seed);
}

TEST_CASE("query stream: truncation radius and determinism") {
    QueryModel model;
    model.centers = {{1.0, 0.0}, {-1.0, 0.0}};
    model.radius = 0.5;
    SampleStream s1(Seed{42});
    SampleStream s2(Seed{42});
    std::size_t near_first = 0;
    for (int i = 0; i < 2000; ++i) {
        QueryEmbedding q = s1.draw_query(model);
        CHECK(s2.draw_query(model) == q);
        double d0 = std::hypot(q[0] - 1.0, q[1]);
        double d1 = std::hypot(q[0] + 1.0, q[1]);
        CHECK(std::min(d0, d1) <= 0.5 + 1e-12);
        if (d0 < d1) ++near_first;
    }
    // Equal-mass mixture: component counts split evenly.
    CHECK(near_first > 850);
    CHECK(near_first < 1150);
}

TEST_CASE("coupled transcript collapses to T distinct responses") {
    ExperimentConfig cfg = unconditional_cfg(Regime::lads_simple, 50, 100);
    cfg.teacher_kind = TeacherKind::linear;
    cfg.out_dim = 4;
    Transcript tr = build_transcript(cfg, 0);
    REQUIRE(tr.records.size() == 5000);
    CHECK(distinct_response_count(tr) == 100);
    CHECK(distinct_noise_count(tr) == 100);

    // Each response appears exactly K = 50 times.
    std::map<std::vector<double>, std::size_t> counts;
    for (const TranscriptRecord& rec : tr.records) ++counts[rec.continuous];
    for (const auto& [resp, count] : counts) CHECK(count == 50);

    // Account-major layout with per-account depth 1..T.
    CHECK(tr.records[0].account == 0);
    CHECK(tr.records[0].depth == 1);
    CHECK(tr.records[99].depth == 100);
    CHECK(tr.records[100].account == 1);
    CHECK(tr.records[100].depth == 1);
    // Matched (bucket, depth) cells share seed and noise bit-exactly.
    CHECK(tr.records[100].seed == tr.records[0].seed);
    CHECK(tr.records[100].noise == tr.records[0].noise);
}

TEST_CASE("iid transcript has all-distinct noise") {
    ExperimentConfig cfg = unconditional_cfg(Regime::iid, 50, 100);
    cfg.teacher_kind = TeacherKind::linear;
    cfg.out_dim = 4;
    Transcript tr = build_transcript(cfg, 0);
    CHECK(distinct_noise_count(tr) == 5000);
    CHECK(distinct_response_count(tr) == 5000);
}

TEST_CASE("conditional regime with a point-mass query model duplicates everything") {
    ExperimentConfig cfg = conditional_cfg(8, 32, 0.0, 1);
    cfg.teacher_kind = TeacherKind::linear;
    cfg.out_dim = 4;
    Transcript tr = build_transcript(cfg, 0);
    stats::CouplingReport matched = matched_pair_coupling(tr);
    CHECK(matched.duplicate_rate == 1.0);
    CHECK(distinct_noise_count(tr) == 32);
}

TEST_CASE("conditional transcript: buckets and depths are consistent") {
    ExperimentConfig cfg = conditional_cfg(6, 40, 0.5);
    Transcript tr = build_transcript(cfg, 1);
    BucketModel model = BucketModel::nearest_center(cfg.queries.centers, cfg.queries.radius);
    std::map<std::pair<std::uint32_t, BucketId>, std::uint32_t> counters;
    for (const TranscriptRecord& rec : tr.records) {
        CHECK(rec.bucket == assign_bucket(model, rec.q));
        CHECK(rec.depth == ++counters[{rec.account, rec.bucket}]);
        CHECK(rec.seed == derive_seed(SeedSpec(rep_seeds(cfg, 1).gateway_key,
                                               perm_id::keyed_mix),
                                      rec.bucket, rec.depth));
    }
    // Same (bucket, depth) across accounts implies identical noise at alpha 1.
    std::map<std::pair<BucketId, std::uint32_t>, NoiseVector> cell_noise;
    for (const TranscriptRecord& rec : tr.records) {
        auto [it, fresh] = cell_noise.emplace(std::make_pair(rec.bucket, rec.depth), rec.noise);
        if (!fresh) CHECK(it->second == rec.noise);
    }
    CHECK(build_transcript(cfg, 1).records.size() == tr.records.size());
}

TEST_CASE("transcripts rebuild bit-identically") {
    ExperimentConfig cfg = conditional_cfg(4, 25, 1.0);
    Transcript a = build_transcript(cfg, 3);
    Transcript b = build_transcript(cfg, 3);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].q == b.records[i].q);
        CHECK(a.records[i].noise == b.records[i].noise);
        CHECK(a.records[i].token == b.records[i].token);
        CHECK(a.records[i].seed == b.records[i].seed);
    }
}

TEST_CASE("interior alpha couples matched pairs at that correlation") {
    ExperimentConfig cfg = unconditional_cfg(Regime::lads_simple, 2, 3000);
    cfg.alpha = 0.7;
    Transcript tr = build_transcript(cfg, 0);
    stats::CouplingReport matched = matched_pair_coupling(tr);
    CHECK(matched.pairs == 3000);
    CHECK(matched.correlation == doctest::Approx(0.7).epsilon(0.05));
    CHECK(matched.duplicate_rate == 0.0);
    stats::CouplingReport control = unmatched_pair_coupling(tr);
    double bound = 4.0 / std::sqrt(static_cast<double>(control.coordinates));
    CHECK(std::fabs(control.correlation) < bound);
    CHECK(control.duplicate_rate == 0.0);
}

TEST_CASE("weight profile arithmetic") {
    WeightProfile two;
    two.w[{0, 1}] = 0.5;
    two.w[{0, 2}] = 0.5;
    CHECK(effective_sample_size(two) == doctest::Approx(2.0).epsilon(1e-15));

    WeightProfile three;
    three.w[{0, 1}] = 0.5;
    three.w[{1, 1}] = 0.25;
    three.w[{1, 2}] = 0.25;
    CHECK(effective_sample_size(three) == doctest::Approx(8.0 / 3.0).epsilon(1e-15));

    WeightProfile empty;
    CHECK_THROWS_AS(effective_sample_size(empty), error);
    WeightProfile negative;
    negative.w[{0, 1}] = -0.5;
    CHECK_THROWS_AS(effective_sample_size(negative), error);
}

TEST_CASE("transcript weight profiles: uniform cells give n_eff = NT") {
    ExperimentConfig cfg = unconditional_cfg(Regime::lads_simple, 10, 50);
    Transcript tr = build_transcript(cfg, 0);
    WeightProfile p = weight_profile(tr);
    CHECK(p.w.size() == 50);
    double total = 0.0;
    for (const auto& [cell, w] : p.w) total += w;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(effective_sample_size(p) == doctest::Approx(50.0).epsilon(1e-9));
}

TEST_CASE("audited weight profile: bad queries move mass into rho") {
    ExperimentConfig cfg = conditional_cfg(5, 200, 1.0);
    Transcript tr = build_transcript(cfg, 0);
    BucketModel model = BucketModel::nearest_center(cfg.queries.centers, cfg.queries.radius);

    // Audit against the true radius: nothing is bad by construction.
    WeightProfile clean =
        weight_profile(tr, model, CenterAssignment{cfg.queries.centers, cfg.queries.radius});
    CHECK(clean.rho == 0.0);
    double neff = effective_sample_size(clean);
    std::size_t nt = cfg.queries.centers.size() * cfg.T;
    CHECK(neff <= static_cast<double>(nt) + 1e-9);

    // Audit against a tighter radius: some queries fall outside every ball.
    WeightProfile tight =
        weight_profile(tr, model, CenterAssignment{cfg.queries.centers, 0.4});
    CHECK(tight.rho > 0.0);
    double total = 0.0;
    for (const auto& [cell, w] : tight.w) total += w;
    CHECK(total == doctest::Approx(1.0 - tight.rho).epsilon(1e-12));
    double bound = static_cast<double>(nt) / ((1.0 - tight.rho) * (1.0 - tight.rho));
    CHECK(effective_sample_size(tight) <= bound + 1e-9);
}

TEST_CASE("sample aggregation folds duplicates without changing the loss") {
    ExperimentConfig cfg = unconditional_cfg(Regime::lads_simple, 5, 20);
    Transcript tr = build_transcript(cfg, 0);
    std::vector<TokenSample> samples = aggregate_samples(tr);
    CHECK(samples.size() <= cfg.vocab);
    double weight = 0.0;
    for (const TokenSample& s : samples) weight += s.weight;
    CHECK(weight == doctest::Approx(100.0).epsilon(1e-12));
    Matrix theta = random_matrix(Seed{5}, 8, 8, 0.3);
    CHECK(dataset_loss(theta, samples) ==
          doctest::Approx(transcript_loss(theta, tr)).epsilon(1e-12));
}

TEST_CASE("zero optimization steps returns the initialization") {
    ExperimentConfig cfg = unconditional_cfg(Regime::iid, 2, 50);
    cfg.steps = 0;
    Transcript tr = build_transcript(cfg, 0);
    TrainResult res = train_student(tr, cfg);
    for (double v : res.theta.data) CHECK(v == 0.0);
    // Cross-entropy at the zero matrix is exactly log Y.
    CHECK(res.train_loss == doctest::Approx(std::log(8.0)).epsilon(1e-12));
}

TEST_CASE("trained student stays in the Frobenius ball") {
    ExperimentConfig cfg = unconditional_cfg(Regime::iid, 4, 200);
    Transcript tr = build_transcript(cfg, 0);
    TrainResult res = train_student(tr, cfg);
    CHECK(frobenius_norm(res.theta) <= cfg.W * (1.0 + 1e-12));
    CHECK(res.train_loss < std::log(8.0));  // must beat the uninformed init
}

TEST_CASE("self-consistency: student recovers a teacher inside its class") {
    ExperimentConfig cfg = conditional_cfg(10, 500, 0.5);
    cfg.alpha = 0.0;  // standard sampling
    cfg.steps = 300;
    Transcript tr = build_transcript(cfg, 0);
    TrainResult res = train_student(tr, cfg);

    SoftmaxTokenTeacher teacher = random_softmax_teacher(
        Seed{cfg.teacher_seed}, cfg.vocab, cfg.q_dim, cfg.W, cfg.input_bound(),
        cfg.teacher_scale);
    SampleStream holdout(Seed{rep_seeds(cfg, 0).holdout_seed});
    double student_acc = 0.0, bayes_acc = 0.0;
    const int n = 4000;
    for (int i = 0; i < n; ++i) {
        QueryEmbedding q = holdout.draw_query(cfg.queries);
        std::vector<double> p = teacher.token_probs(q);
        std::vector<double> z = matvec(res.theta, q);
        std::size_t pick = static_cast<std::size_t>(
            std::max_element(z.begin(), z.end()) - z.begin());
        student_acc += p[pick];
        bayes_acc += *std::max_element(p.begin(), p.end());
    }
    student_acc /= n;
    bayes_acc /= n;
    CHECK(student_acc >= bayes_acc - 0.02);
}

TEST_CASE("gap on the training pairs themselves is exactly zero") {
    ExperimentConfig cfg = unconditional_cfg(Regime::iid, 3, 40);
    Transcript tr = build_transcript(cfg, 0);
    TrainResult res = train_student(tr, cfg);
    std::vector<TokenSample> train_pairs;
    for (const TranscriptRecord& rec : tr.records)
        train_pairs.push_back(TokenSample{rec.q, rec.token, 1.0});
    GapReport gap = measure_gap_pairs(res.theta, tr, train_pairs);
    CHECK(gap.gap_at_theta == 0.0);
    CHECK(gap.sup_gap == 0.0);
}

TEST_CASE("measure_gap enforces the holdout floor and reports components") {
    ExperimentConfig cfg = unconditional_cfg(Regime::iid, 2, 100);
    Transcript tr = build_transcript(cfg, 0);
    TrainResult res = train_student(tr, cfg);
    CHECK_THROWS_AS(measure_gap(res.theta, tr, cfg, 5000), error);
    GapReport gap = measure_gap(res.theta, tr, cfg, 10000);
    CHECK(gap.gap_at_theta == doctest::Approx(std::fabs(gap.train_loss - gap.pop_loss)));
    CHECK(gap.sup_gap >= gap.gap_at_theta);
    CHECK(gap.pop_se == 0.0);  // point-mass query model sums tokens exactly
}

TEST_CASE("median gap shrinks as T doubles under iid") {
    std::vector<double> medians;
    for (std::size_t t : {64, 256, 1024, 4096}) {
        ExperimentConfig cfg = unconditional_cfg(Regime::iid, 4, t);
        std::vector<double> gaps;
        for (std::size_t rep = 0; rep < 15; ++rep) gaps.push_back(run_point(cfg, rep).gap);
        medians.push_back(stats::median(gaps));
    }
    for (std::size_t i = 0; i + 1 < medians.size(); ++i) CHECK(medians[i + 1] < medians[i]);
}

TEST_CASE("coupled gap is K-invariant, fresh-noise gap is not") {
    // Under full coupling the gap law depends only on T, so K = 1 and K = 32
    // samples are exchangeable (two-sample KS must not reject).
    std::vector<double> g1, g32;
    for (std::size_t rep = 0; rep < 40; ++rep) {
        ExperimentConfig a = unconditional_cfg(Regime::lads_simple, 1, 64);
        ExperimentConfig b = unconditional_cfg(Regime::lads_simple, 32, 64);
        g1.push_back(run_point(a, rep).gap);
        g32.push_back(run_point(b, rep).gap);
    }
    stats::TestResult same = stats::ks_two_sample(g1, g32, 0.01);
    CHECK(same.pass);
    CHECK(same.p_value > 0.01);

    // Control: iid at K = 32 concentrates visibly harder than K = 1.
    std::vector<double> i1, i32;
    for (std::size_t rep = 0; rep < 40; ++rep) {
        ExperimentConfig a = unconditional_cfg(Regime::iid, 1, 64);
        ExperimentConfig b = unconditional_cfg(Regime::iid, 32, 64);
        i1.push_back(run_point(a, rep).gap);
        i32.push_back(run_point(b, rep).gap);
    }
    CHECK(stats::median(i1) > 2.0 * stats::median(i32));
}

TEST_CASE("alpha zero under coupling equals the iid regime in law") {
    std::vector<double> zero_alpha, iid;
    for (std::size_t rep = 0; rep < 30; ++rep) {
        ExperimentConfig a = unconditional_cfg(Regime::lads_simple, 8, 64);
        a.alpha = 0.0;
        ExperimentConfig b = unconditional_cfg(Regime::iid, 8, 64);
        zero_alpha.push_back(run_point(a, rep).gap);
        iid.push_back(run_point(b, rep).gap);
    }
    stats::TestResult same = stats::ks_two_sample(zero_alpha, iid, 0.01);
    CHECK(same.pass);
}

TEST_CASE("run_point fills the report columns") {
    ExperimentConfig cfg = conditional_cfg(4, 50, 0.5);
    PointResult r = run_point(cfg, 2);
    CHECK(r.regime == Regime::lads);
    CHECK(r.K == 4);
    CHECK(r.T == 50);
    CHECK(r.rep == 2);
    CHECK(r.gap >= 0.0);
    CHECK(r.rho == 0.0);
    CHECK(r.n_eff > 0.0);
    CHECK(r.n_eff <= 4.0 * 50.0 + 1e-9);
    CHECK(r.distinct > 0);

    ExperimentConfig iid_cfg = unconditional_cfg(Regime::iid, 4, 50);
    PointResult ri = run_point(iid_cfg, 0);
    CHECK(ri.n_eff == 200.0);
    CHECK(ri.distinct == 200);
}

TEST_CASE("synthetic slope fit recovers an exact power law") {
    std::vector<PointResult> rows;
    for (std::size_t k : {1, 2, 4, 8}) {
        for (std::size_t rep = 0; rep < 5; ++rep) {
            PointResult r;
            r.regime = Regime::iid;
            r.K = k;
            r.T = 32;
            r.rep = rep;
            r.gap = 3.0 / std::sqrt(static_cast<double>(k * 32));
            rows.push_back(r);
        }
    }
    SlopeFit fit = gap_slope(rows, GapAxis::kt, 50, Seed{1});
    CHECK(fit.slope == doctest::Approx(-0.5).epsilon(1e-9));
    CHECK(fit.points == 4);
    CHECK(fit.ci_lo == doctest::Approx(-0.5).epsilon(1e-9));
    CHECK(fit.ci_hi == doctest::Approx(-0.5).epsilon(1e-9));

    std::vector<PointResult> degenerate(rows.begin(), rows.begin() + 5);
    CHECK_THROWS_AS(gap_slope(degenerate, GapAxis::kt, 10, Seed{1}), error);
}

TEST_CASE("scaling sweep emits slopes and deterministic csv") {
    SweepConfig sweep;
    sweep.base = unconditional_cfg(Regime::iid, 1, 1);
    sweep.regimes = {Regime::iid};
    sweep.Ks = {1, 4, 16, 64};
    sweep.Ts = {64};
    sweep.alphas = {1.0};
    sweep.repetitions = 20;
    sweep.bootstrap = 60;

    SweepConfig bad = sweep;
    bad.repetitions = 5;
    CHECK_THROWS_AS(scaling_sweep(bad), error);
    bad = sweep;
    bad.Ks.clear();
    CHECK_THROWS_AS(scaling_sweep(bad), error);

    SweepReport report = scaling_sweep(sweep);
    CHECK(report.rows.size() == 4 * 20);
    REQUIRE(report.slopes.count("iid_gap_vs_KT") == 1);
    SlopeFit fit = report.slopes.at("iid_gap_vs_KT");
    CHECK(fit.slope < -0.3);
    CHECK(fit.slope > -0.75);
    CHECK(fit.ci_lo <= fit.slope);
    CHECK(fit.ci_hi >= fit.slope);
    CHECK(report.summary_json().find("iid_gap_vs_KT") != std::string::npos);

    std::string csv = results_csv(report.rows);
    CHECK(csv.rfind("regime,K,T,alpha,rep,train_loss,pop_loss,gap,n_eff,distinct,rho\n", 0) ==
          0);
    // Determinism: a second full run reproduces the bytes exactly.
    CHECK(results_csv(run_grid(sweep)) == csv);
}

TEST_CASE("alignment fluctuation: point mass has zero deviation") {
    QueryModel model;
    model.centers = {QueryEmbedding(4, 0.5)};
    model.radius = 0.0;
    BucketModel buckets = BucketModel::nearest_center(model.centers, 1.0);
    AlignmentReport rep = alignment_fluctuation(model, buckets, 1000, 0.05, 20, Seed{3});
    CHECK(rep.violations == 0);
    CHECK(rep.median_max_dev == 0.0);
    CHECK(rep.bound > 0.0);
}

TEST_CASE("alignment fluctuation: violation rate within the Hoeffding budget") {
    QueryModel model;
    for (std::size_t j = 0; j < 4; ++j) {
        QueryEmbedding c(8, 0.0);
        c[j] = 3.0;
        model.centers.push_back(c);
    }
    model.radius = 0.5;
    BucketModel buckets = BucketModel::nearest_center(model.centers, model.radius);
    AlignmentReport rep = alignment_fluctuation(model, buckets, 2000, 0.05, 100, Seed{9});
    CHECK(rep.violation_rate <= 0.05);
    CHECK(rep.median_max_dev < rep.bound);
    CHECK(rep.median_max_dev > 0.0);

    SlopeFit slope = alignment_scaling(model, buckets, {500, 1000, 2000, 4000, 8000}, 40, Seed{4});
    CHECK(slope.slope == doctest::Approx(-0.5).epsilon(0.3));
}
