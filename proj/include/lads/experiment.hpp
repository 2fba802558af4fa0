#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lads/bucket_model.hpp"
#include "lads/gateway.hpp"
#include "lads/matrix.hpp"
#include "lads/softmax_model.hpp"
#include "lads/stats.hpp"
#include "lads/teacher.hpp"

namespace lads {

// Sampling regimes for the multi-account distillation experiment.
//   iid         every request gets fresh private noise (standard sampling);
//               unconditional, all queries equal the single anchor center.
//   lads_simple seed depends only on the per-account access index t, so the
//               t-th requests of all accounts share noise; unconditional.
//   lads        conditional pipeline: seed depends on (semantic bucket,
//               per-account bucket depth); queries drawn from the mixture.
enum class Regime { iid = 0, lads_simple = 1, lads = 2 };

std::string regime_name(Regime r);
Regime regime_from_name(const std::string& name);

enum class TeacherKind { token, linear };

// Task query distribution: equal-mass mixture over `centers`; each component
// adds a Gaussian offset with sigma = radius/2, rejection-truncated to the
// radius ball. radius = 0 degenerates to point masses on the centers.
struct QueryModel {
    std::vector<QueryEmbedding> centers;
    double radius = 0.0;
};

// Sequential sampler over one seed's uniform stream. Determinism contract:
// the draw sequence is a pure function of (seed, call sequence).
class SampleStream {
  public:
    explicit SampleStream(Seed seed) : seed_(seed) {}
    double next_uniform();
    double next_gaussian();
    QueryEmbedding draw_query(const QueryModel& model);

  private:
    Seed seed_;
    std::uint64_t pos_ = 0;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

struct ExperimentConfig {
    Regime regime = Regime::iid;
    std::size_t K = 1;  // accounts
    std::size_t T = 1;  // queries per account
    double alpha = 1.0;
    std::size_t q_dim = 8;
    std::size_t vocab = 8;   // Y
    double W = 1.0;          // Frobenius radius for teacher and student
    TeacherKind teacher_kind = TeacherKind::token;
    std::uint64_t teacher_seed = 1;
    double teacher_scale = 1.0;  // entry scale before projecting to the W ball
    double sigma = 0.1;          // linear teacher noise scale
    std::size_t out_dim = 4;     // linear teacher output dim
    QueryModel queries;
    double bucket_radius = -1.0;  // conditional cover radius; < 0 means queries.radius
    std::size_t repetitions = 1;
    std::uint64_t master_seed = 1;
    std::size_t steps = 150;
    double step_size = 0.5;
    std::size_t n_holdout = 10000;
    std::size_t probes = 8;

    void validate() const;
    double cover_radius() const { return bucket_radius < 0.0 ? queries.radius : bucket_radius; }
    double input_bound() const;  // R_x = max center norm + query radius
    double loss_bound() const;   // B = log Y + 2 R_x W
    std::string to_json() const;
    static ExperimentConfig from_json(const std::string& text);
};

struct SweepConfig {
    ExperimentConfig base;
    std::vector<Regime> regimes;
    std::vector<std::size_t> Ks;
    std::vector<std::size_t> Ts;
    std::vector<double> alphas;
    std::size_t repetitions = 20;
    std::size_t parallelism = 0;  // 0 means all available cores
    std::size_t bootstrap = 200;

    void validate() const;
    std::string to_json() const;
    static SweepConfig from_json(const std::string& text);
    static SweepConfig preset(const std::string& name);
};

struct TranscriptRecord {
    std::uint32_t account = 0;
    QueryEmbedding q;
    BucketId bucket = 0;
    std::uint32_t depth = 0;
    Seed seed;
    NoiseVector noise;       // Gaussian domain, exactly as served
    std::uint32_t token = 0;  // token teacher response
    NoiseVector continuous;   // linear teacher response
};

struct Transcript {
    Regime regime = Regime::iid;
    TeacherKind teacher_kind = TeacherKind::token;
    std::size_t K = 0;
    std::size_t T = 0;
    double alpha = 1.0;
    std::size_t rep = 0;
    std::vector<TranscriptRecord> records;  // account-major, length K*T
};

// Per-repetition sub-seeds, all derived from (master seed, regime, K, T, rep).
struct RepSeeds {
    std::uint64_t gateway_key = 0;
    std::uint64_t fresh_key = 0;
    std::uint64_t query_seed = 0;
    std::uint64_t holdout_seed = 0;
};
RepSeeds rep_seeds(const ExperimentConfig& cfg, std::size_t rep);

Transcript build_transcript(const ExperimentConfig& cfg, std::size_t rep);

std::size_t distinct_noise_count(const Transcript& tr);
std::size_t distinct_response_count(const Transcript& tr);

// Coupling diagnostics: matched pairs share a (bucket, depth) cell across
// consecutive accounts; unmatched pairs (the control) take the same account
// at consecutive depths.
stats::CouplingReport matched_pair_coupling(const Transcript& tr);
stats::CouplingReport unmatched_pair_coupling(const Transcript& tr);

// Cell weights w[(center j, depth s)] = n_{j,s} / (KT). Audited form routes
// bad queries (outside every cover ball, or hashed away from their center)
// into rho instead of the weight map, so sum(w) = 1 - rho.
struct WeightProfile {
    std::map<std::pair<BucketId, std::uint32_t>, double> w;
    double rho = 0.0;
};
WeightProfile weight_profile(const Transcript& tr);
WeightProfile weight_profile(const Transcript& tr, const BucketModel& model,
                             const CenterAssignment& task);
// n_eff = 1 / sum(w^2).
double effective_sample_size(const WeightProfile& profile);

std::vector<TokenSample> aggregate_samples(const Transcript& tr);

struct TrainResult {
    Matrix theta;
    double train_loss = 0.0;
};
// Projected gradient descent on the raw transcript from the zero matrix.
TrainResult train_student(const Transcript& tr, const ExperimentConfig& cfg);

double transcript_loss(const Matrix& theta, const Transcript& tr);

struct PopulationEstimate {
    double loss = 0.0;
    double se = 0.0;  // Monte Carlo standard error over holdout queries
};
// Holdout estimate of E ell(theta; q, x): queries are Monte Carlo draws,
// the inner expectation over tokens given q is summed exactly.
PopulationEstimate population_loss(const Matrix& theta, const ExperimentConfig& cfg,
                                   std::size_t n_holdout, Seed query_seed);

// Fixed probe thetas in the W ball, derived from the master seed only, so
// every grid point sees the same probes.
std::vector<Matrix> probe_set(const ExperimentConfig& cfg);

struct GapReport {
    double train_loss = 0.0;
    double pop_loss = 0.0;
    double pop_se = 0.0;
    double gap_at_theta = 0.0;
    double sup_gap = 0.0;  // max over the trained theta and the probe set
};
GapReport measure_gap(const Matrix& theta, const Transcript& tr, const ExperimentConfig& cfg,
                      std::size_t n_holdout, Seed holdout_seed,
                      const std::vector<Matrix>& probes);
GapReport measure_gap(const Matrix& theta, const Transcript& tr, const ExperimentConfig& cfg,
                      std::size_t n_holdout);
// Degenerate estimator over an explicit evaluation set; evaluating on the
// training pairs themselves gives gap 0 exactly.
GapReport measure_gap_pairs(const Matrix& theta, const Transcript& tr,
                            const std::vector<TokenSample>& eval_pairs);

struct PointResult {
    Regime regime = Regime::iid;
    std::size_t K = 0;
    std::size_t T = 0;
    double alpha = 1.0;
    std::size_t rep = 0;
    double train_loss = 0.0;
    double pop_loss = 0.0;
    double gap = 0.0;  // sup-style statistic (max over trained theta + probes)
    double n_eff = 0.0;
    std::size_t distinct = 0;
    double rho = 0.0;
};

PointResult run_point(const ExperimentConfig& cfg, std::size_t rep);
std::vector<PointResult> run_grid(const SweepConfig& sweep);
std::string results_csv(const std::vector<PointResult>& rows);

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    std::size_t points = 0;
};

enum class GapAxis { kt, k, t };
// Median gap over reps per grid point, then OLS on (log x, log median).
// CI from bootstrap resampling of repetitions.
SlopeFit gap_slope(const std::vector<PointResult>& rows, GapAxis axis, std::size_t n_boot,
                   Seed boot_seed);

struct SweepReport {
    std::vector<PointResult> rows;
    std::map<std::string, SlopeFit> slopes;
    std::map<std::string, double> scalars;
    std::string summary_json() const;
};
// Fewer repetitions than this make per-point medians (and their bootstrap
// intervals) too coarse to fit slopes against.
inline constexpr std::size_t kMinFitRepetitions = 20;
SweepReport scaling_sweep(const SweepConfig& sweep);

struct AlignmentReport {
    std::size_t repetitions = 0;
    std::size_t violations = 0;
    double violation_rate = 0.0;
    double bound = 0.0;
    double median_max_dev = 0.0;
};
// Empirical cluster-weight fluctuation: per repetition draw M queries,
// compare max_j |w_j - 1/N| against sqrt(log(2N/delta) / (2M)).
AlignmentReport alignment_fluctuation(const QueryModel& queries, const BucketModel& model,
                                      std::size_t M, double delta, std::size_t reps, Seed seed);
// Slope of log median max-deviation vs log M.
SlopeFit alignment_scaling(const QueryModel& queries, const BucketModel& model,
                           const std::vector<std::size_t>& Ms, std::size_t reps, Seed seed);

}  // namespace lads
