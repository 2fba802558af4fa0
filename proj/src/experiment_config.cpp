#include <cmath>

#include <json.hpp>

#include "lads/error.hpp"
#include "lads/experiment.hpp"

namespace lads {
namespace {

using nlohmann::json;

TeacherKind teacher_kind_from_name(const std::string& name) {
    if (name == "token") return TeacherKind::token;
    if (name == "linear") return TeacherKind::linear;
    throw error(errc::config_invalid, "teacher_kind must be token or linear: " + name);
}

const char* teacher_kind_name(TeacherKind kind) {
    return kind == TeacherKind::token ? "token" : "linear";
}

json queries_to_json(const QueryModel& q) {
    return json{{"centers", q.centers}, {"radius", q.radius}};
}

QueryModel queries_from_json(const json& j) {
    QueryModel q;
    q.centers = j.at("centers").get<std::vector<QueryEmbedding>>();
    q.radius = j.value("radius", 0.0);
    return q;
}

json config_to_json(const ExperimentConfig& c) {
    return json{{"regime", regime_name(c.regime)},
                {"K", c.K},
                {"T", c.T},
                {"alpha", c.alpha},
                {"q_dim", c.q_dim},
                {"vocab", c.vocab},
                {"W", c.W},
                {"teacher_kind", teacher_kind_name(c.teacher_kind)},
                {"teacher_seed", c.teacher_seed},
                {"teacher_scale", c.teacher_scale},
                {"sigma", c.sigma},
                {"out_dim", c.out_dim},
                {"queries", queries_to_json(c.queries)},
                {"bucket_radius", c.bucket_radius},
                {"repetitions", c.repetitions},
                {"master_seed", c.master_seed},
                {"steps", c.steps},
                {"step_size", c.step_size},
                {"n_holdout", c.n_holdout},
                {"probes", c.probes}};
}

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    c.regime = regime_from_name(j.value("regime", "iid"));
    c.K = j.value("K", std::size_t{1});
    c.T = j.value("T", std::size_t{1});
    c.alpha = j.value("alpha", 1.0);
    c.q_dim = j.value("q_dim", std::size_t{8});
    c.vocab = j.value("vocab", std::size_t{8});
    c.W = j.value("W", 1.0);
    c.teacher_kind = teacher_kind_from_name(j.value("teacher_kind", "token"));
    c.teacher_seed = j.value("teacher_seed", std::uint64_t{1});
    c.teacher_scale = j.value("teacher_scale", 1.0);
    c.sigma = j.value("sigma", 0.1);
    c.out_dim = j.value("out_dim", std::size_t{4});
    c.queries = queries_from_json(j.at("queries"));
    c.bucket_radius = j.value("bucket_radius", -1.0);
    c.repetitions = j.value("repetitions", std::size_t{1});
    c.master_seed = j.value("master_seed", std::uint64_t{1});
    c.steps = j.value("steps", std::size_t{150});
    c.step_size = j.value("step_size", 0.5);
    c.n_holdout = j.value("n_holdout", std::size_t{10000});
    c.probes = j.value("probes", std::size_t{8});
    c.validate();
    return c;
}

}  // namespace

std::string regime_name(Regime r) {
    switch (r) {
        case Regime::iid: return "iid";
        case Regime::lads_simple: return "lads_simple";
        case Regime::lads: return "lads";
    }
    throw error(errc::invalid_argument, "unknown regime value");
}

Regime regime_from_name(const std::string& name) {
    if (name == "iid") return Regime::iid;
    if (name == "lads_simple") return Regime::lads_simple;
    if (name == "lads") return Regime::lads;
    throw error(errc::config_invalid, "regime must be iid, lads_simple or lads: " + name);
}

void ExperimentConfig::validate() const {
    if (K < 1 || T < 1) throw error(errc::config_invalid, "K and T must be at least 1");
    if (repetitions < 1) throw error(errc::config_invalid, "repetitions must be at least 1");
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw error(errc::config_invalid, "alpha must lie in [0, 1]");
    if (q_dim < 1) throw error(errc::config_invalid, "q_dim must be positive");
    if (vocab < 2) throw error(errc::config_invalid, "vocab needs at least two tokens");
    if (!(W > 0.0)) throw error(errc::config_invalid, "W must be positive");
    if (!(teacher_scale > 0.0)) throw error(errc::config_invalid, "teacher_scale must be positive");
    if (teacher_kind == TeacherKind::linear) {
        if (!(sigma > 0.0)) throw error(errc::config_invalid, "sigma must be positive");
        if (out_dim < 1) throw error(errc::config_invalid, "out_dim must be positive");
    }
    if (!(step_size > 0.0)) throw error(errc::config_invalid, "step_size must be positive");
    if (queries.centers.empty())
        throw error(errc::config_invalid, "query model needs at least one center");
    for (const QueryEmbedding& c : queries.centers)
        if (c.size() != q_dim)
            throw error(errc::config_invalid, "query centers must have dim q_dim");
    if (!(queries.radius >= 0.0))
        throw error(errc::config_invalid, "query radius must be nonnegative");
    if (regime != Regime::lads && (queries.centers.size() != 1 || queries.radius != 0.0))
        throw error(errc::config_invalid,
                    "iid and lads_simple are unconditional: one center, radius 0");
    if (n_holdout < 10000)
        throw error(errc::config_invalid, "n_holdout must be at least 10^4");
}

double ExperimentConfig::input_bound() const {
    double max_norm = 0.0;
    for (const QueryEmbedding& c : queries.centers) max_norm = std::max(max_norm, norm(c));
    return max_norm + queries.radius;
}

double ExperimentConfig::loss_bound() const {
    return std::log(static_cast<double>(vocab)) + 2.0 * input_bound() * W;
}

std::string ExperimentConfig::to_json() const { return config_to_json(*this).dump(2); }

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
    try {
        return config_from_json(json::parse(text));
    } catch (const json::exception& e) {
        throw error(errc::config_invalid, std::string("experiment config parse: ") + e.what());
    }
}

void SweepConfig::validate() const {
    if (regimes.empty() || Ks.empty() || Ts.empty() || alphas.empty())
        throw error(errc::config_invalid, "sweep grid must be non-empty on every axis");
    if (repetitions < 1) throw error(errc::config_invalid, "repetitions must be at least 1");
    if (bootstrap < 1) throw error(errc::config_invalid, "bootstrap must be at least 1");
    for (std::size_t k : Ks)
        if (k < 1) throw error(errc::config_invalid, "K values must be at least 1");
    for (std::size_t t : Ts)
        if (t < 1) throw error(errc::config_invalid, "T values must be at least 1");
    for (double a : alphas)
        if (!(a >= 0.0 && a <= 1.0))
            throw error(errc::config_invalid, "alpha values must lie in [0, 1]");
    ExperimentConfig probe = base;
    for (Regime r : regimes) {
        probe.regime = r;
        probe.alpha = alphas.front();
        probe.K = Ks.front();
        probe.T = Ts.front();
        probe.validate();
    }
}

std::string SweepConfig::to_json() const {
    std::vector<std::string> names;
    names.reserve(regimes.size());
    for (Regime r : regimes) names.push_back(regime_name(r));
    json j{{"base", config_to_json(base)},
           {"regimes", names},
           {"K", Ks},
           {"T", Ts},
           {"alphas", alphas},
           {"repetitions", repetitions},
           {"parallelism", parallelism},
           {"bootstrap", bootstrap}};
    return j.dump(2);
}

SweepConfig SweepConfig::from_json(const std::string& text) {
    try {
        json j = json::parse(text);
        SweepConfig s;
        s.base = config_from_json(j.at("base"));
        for (const auto& name : j.at("regimes").get<std::vector<std::string>>())
            s.regimes.push_back(regime_from_name(name));
        s.Ks = j.at("K").get<std::vector<std::size_t>>();
        s.Ts = j.at("T").get<std::vector<std::size_t>>();
        s.alphas = j.value("alphas", std::vector<double>{1.0});
        s.repetitions = j.value("repetitions", std::size_t{20});
        s.parallelism = j.value("parallelism", std::size_t{0});
        s.bootstrap = j.value("bootstrap", std::size_t{200});
        s.validate();
        return s;
    } catch (const json::exception& e) {
        throw error(errc::config_invalid, std::string("sweep config parse: ") + e.what());
    }
}

SweepConfig SweepConfig::preset(const std::string& name) {
    if (name == "prop1") {
        SweepConfig s;
        s.base.q_dim = 8;
        s.base.vocab = 8;
        s.base.W = 1.0;
        s.base.teacher_kind = TeacherKind::token;
        s.base.teacher_seed = 7;
        s.base.teacher_scale = 1.0;
        // Unconditional anchor query: unit norm, equal weight on every axis.
        s.base.queries.centers = {QueryEmbedding(8, 1.0 / std::sqrt(8.0))};
        s.base.queries.radius = 0.0;
        s.base.master_seed = 1;
        s.base.steps = 150;
        s.base.step_size = 0.5;
        s.base.n_holdout = 10000;
        s.base.probes = 8;
        s.regimes = {Regime::iid, Regime::lads_simple};
        s.Ks = {1, 4, 16, 64};
        s.Ts = {64, 256, 1024};
        s.alphas = {1.0};
        s.repetitions = 20;
        s.bootstrap = 200;
        return s;
    }
    throw error(errc::config_invalid, "unknown preset: " + name);
}

}  // namespace lads
