#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lads/experiment.hpp"

namespace lads {

inline constexpr const char* kArtifactVersion = "1.0.0";

// Optional acceptance bands evaluated after a sweep. An absent band asserts
// nothing; a present band turns an out-of-range statistic into a run failure
// (nonzero exit from the simulate command).
struct SweepAssertions {
    std::optional<std::pair<double, double>> iid_kt_slope;
    // Applied to every fixed-T gap-vs-K fit of the coupled regime.
    std::optional<std::pair<double, double>> simple_k_slope;
    // Applied to every K=16 coupled/iid median-gap ratio.
    std::optional<std::pair<double, double>> ratio_k16;

    nlohmann::json to_json() const;
    static SweepAssertions from_json(const nlohmann::json& j);
};

struct SimulateSpec {
    SweepConfig sweep;
    SweepAssertions checks;

    nlohmann::json to_json() const;
    static SimulateSpec from_json(const nlohmann::json& j);
    // "prop1": the collapse-scaling sweep with its slope and ratio bands.
    static SimulateSpec preset(const std::string& name);
};

struct SimulateOutcome {
    SweepReport report;
    std::vector<std::string> failures;  // human-readable unmet assertions
    std::string csv_path;
    std::string summary_path;
    std::string manifest_path;
};

// Body of the simulate command. Runs the grid (with slope fits when the
// repetition floor for fitting is met, rows-only otherwise), writes
// results.csv, summary.json and manifest.json under out_dir, and evaluates
// the configured assertion bands. The manifest is written before the run
// starts and finalized afterwards. Output bytes depend only on `spec`.
SimulateOutcome simulate_to_dir(const SimulateSpec& spec, const std::string& out_dir,
                                const std::string& config_note = "inline");

}  // namespace lads
