#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lads/experiment.hpp"
#include "lads/seed.hpp"

namespace lads {

struct CheckResult {
    std::string id;      // "1-losslessness" ... "9-determinism"
    bool pass = false;
    std::string detail;  // measured numbers, one line
    double seconds = 0.0;
};

struct VerifyOptions {
    // Substring filters on check ids; empty runs everything.
    std::vector<std::string> only;
    std::size_t parallelism = 0;  // 0 = hardware concurrency
    // Seed permutation used by the gateway-level checks. Swapping in the
    // deliberately non-injective test permutation must make the coupling and
    // losslessness checks fail; the suite watches itself that way.
    perm_id seed_permutation = perm_id::keyed_mix;
};

// The acceptance suite. Checks 3, 4 and 8 share one collapse-scaling sweep;
// the suite memoizes it so a full run pays for it once.
class VerifySuite {
  public:
    explicit VerifySuite(VerifyOptions opts = {});

    // Runs the checks selected by the filter, in numeric order.
    std::vector<CheckResult> run();

    CheckResult losslessness();   // 1: per-alpha KS + autocorrelation
    CheckResult coupling();       // 2: bit-exact duplication, interior-alpha correlation
    CheckResult collapse();       // 3: distinct-response identity + scaling slopes
    CheckResult separation();     // 4: sqrt(K) median-gap ratio at K=16
    CheckResult rademacher();     // 5: Monte Carlo estimate under the closed-form bound
    CheckResult sample_size();    // 6: n_eff arithmetic, occupancy and Cauchy bounds
    CheckResult alignment();      // 7: cluster-weight fluctuation vs Hoeffding budget
    CheckResult bias();           // 8: radius-monotone held-out loss + point-mass reduction
    CheckResult determinism();    // 9: byte-identical simulate outputs

  private:
    const SweepReport& prop1();

    VerifyOptions opts_;
    std::optional<SweepReport> prop1_;
};

std::string render_report(const std::vector<CheckResult>& results);
std::string report_json(const std::vector<CheckResult>& results);
bool all_passed(const std::vector<CheckResult>& results);

}  // namespace lads
