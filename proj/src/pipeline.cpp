#include "lads/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>

#include "lads/error.hpp"

namespace lads {

namespace {

using nlohmann::json;

json band_json(const std::optional<std::pair<double, double>>& band) {
    if (!band) return nullptr;
    return json::array({band->first, band->second});
}

std::optional<std::pair<double, double>> band_from_json(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    const json& b = j.at(key);
    if (!b.is_array() || b.size() != 2)
        throw error(errc::config_invalid, std::string(key) + " must be a [lo, hi] pair");
    auto band = std::make_pair(b[0].get<double>(), b[1].get<double>());
    if (!(band.first <= band.second))
        throw error(errc::config_invalid, std::string(key) + " band is inverted");
    return band;
}

std::string utc_now() {
    std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw error(errc::io_error, "cannot open " + path + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw error(errc::io_error, "short write to " + path);
}

bool in_band(double v, const std::pair<double, double>& band) {
    return v >= band.first && v <= band.second;
}

char const* kRatioPrefix = "gap_ratio_simple_over_iid_K16_T";

}  // namespace

json SweepAssertions::to_json() const {
    return json{{"iid_kt_slope", band_json(iid_kt_slope)},
                {"simple_k_slope", band_json(simple_k_slope)},
                {"ratio_k16", band_json(ratio_k16)}};
}

SweepAssertions SweepAssertions::from_json(const json& j) {
    SweepAssertions a;
    a.iid_kt_slope = band_from_json(j, "iid_kt_slope");
    a.simple_k_slope = band_from_json(j, "simple_k_slope");
    a.ratio_k16 = band_from_json(j, "ratio_k16");
    return a;
}

json SimulateSpec::to_json() const {
    return json{{"sweep", json::parse(sweep.to_json())}, {"checks", checks.to_json()}};
}

SimulateSpec SimulateSpec::from_json(const json& j) {
    SimulateSpec spec;
    const json& sw = j.at("sweep");
    // Accept the nested-object form (what to_json emits) and a string blob.
    spec.sweep = SweepConfig::from_json(sw.is_string() ? sw.get<std::string>() : sw.dump());
    if (j.contains("checks")) spec.checks = SweepAssertions::from_json(j.at("checks"));
    return spec;
}

SimulateSpec SimulateSpec::preset(const std::string& name) {
    SimulateSpec spec;
    spec.sweep = SweepConfig::preset(name);  // throws on unknown names
    if (name == "prop1") {
        spec.checks.iid_kt_slope = {-0.6, -0.4};
        spec.checks.simple_k_slope = {-0.1, 0.1};
        spec.checks.ratio_k16 = {2.0, 6.4};
    }
    return spec;
}

SimulateOutcome simulate_to_dir(const SimulateSpec& spec, const std::string& out_dir,
                                const std::string& config_note) {
    spec.sweep.validate();
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw error(errc::io_error, "cannot create " + out_dir + ": " + ec.message());

    SimulateOutcome out;
    out.csv_path = (fs::path(out_dir) / "results.csv").string();
    out.summary_path = (fs::path(out_dir) / "summary.json").string();
    out.manifest_path = (fs::path(out_dir) / "manifest.json").string();

    json manifest{{"config", config_note},
                  {"master_seed", spec.sweep.base.master_seed},
                  {"version", kArtifactVersion},
                  {"started_at", utc_now()},
                  {"finished_at", ""},
                  {"outputs", json::array()}};
    write_file(out.manifest_path, manifest.dump(2) + "\n");

    if (spec.sweep.repetitions >= kMinFitRepetitions) {
        out.report = scaling_sweep(spec.sweep);
    } else {
        out.report.rows = run_grid(spec.sweep);
    }

    write_file(out.csv_path, results_csv(out.report.rows));
    write_file(out.summary_path, out.report.summary_json() + "\n");

    manifest["finished_at"] = utc_now();
    manifest["outputs"] = json::array({out.csv_path, out.summary_path});
    write_file(out.manifest_path, manifest.dump(2) + "\n");

    char buf[160];
    if (spec.checks.iid_kt_slope) {
        auto it = out.report.slopes.find("iid_gap_vs_KT");
        if (it == out.report.slopes.end()) {
            out.failures.push_back("iid_kt_slope: fit iid_gap_vs_KT was not produced");
        } else if (!in_band(it->second.slope, *spec.checks.iid_kt_slope)) {
            std::snprintf(buf, sizeof buf, "iid_kt_slope: %.4f outside [%.2f, %.2f]",
                          it->second.slope, spec.checks.iid_kt_slope->first,
                          spec.checks.iid_kt_slope->second);
            out.failures.push_back(buf);
        }
    }
    if (spec.checks.simple_k_slope) {
        std::size_t seen = 0;
        for (const auto& [name, fit] : out.report.slopes) {
            if (name.rfind("lads_simple_gap_vs_K_at_T", 0) != 0) continue;
            ++seen;
            if (!in_band(fit.slope, *spec.checks.simple_k_slope)) {
                std::snprintf(buf, sizeof buf, "simple_k_slope: %s = %.4f outside [%.2f, %.2f]",
                              name.c_str(), fit.slope, spec.checks.simple_k_slope->first,
                              spec.checks.simple_k_slope->second);
                out.failures.push_back(buf);
            }
        }
        if (seen == 0)
            out.failures.push_back("simple_k_slope: no fixed-T gap-vs-K fits were produced");
    }
    if (spec.checks.ratio_k16) {
        std::size_t seen = 0;
        for (const auto& [name, v] : out.report.scalars) {
            if (name.rfind(kRatioPrefix, 0) != 0) continue;
            ++seen;
            if (!in_band(v, *spec.checks.ratio_k16)) {
                std::snprintf(buf, sizeof buf, "ratio_k16: %s = %.4f outside [%.2f, %.2f]",
                              name.c_str(), v, spec.checks.ratio_k16->first,
                              spec.checks.ratio_k16->second);
                out.failures.push_back(buf);
            }
        }
        if (seen == 0) out.failures.push_back("ratio_k16: no K=16 median-gap ratios were produced");
    }
    return out;
}

}  // namespace lads
