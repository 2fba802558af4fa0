#pragma once

#include <cstddef>
#include <vector>

#include "lads/noise.hpp"

namespace lads::stats {

struct TestResult {
    double statistic = 0.0;
    double critical = 0.0;
    double p_value = 0.0;
    bool pass = false;
};

enum class Reference { uniform01, std_normal };

// Survival function of the asymptotic Kolmogorov distribution.
double kolmogorov_sf(double t);
// c with kolmogorov_sf(c) = significance (e.g. 1.6276 at 0.01).
double kolmogorov_critical(double significance);

// Regularized lower incomplete gamma P(a, x).
double gammp(double a, double x);
double chi_square_critical(std::size_t df, double significance);

double normal_cdf(double x);

// One-sample KS test against a fixed reference distribution. pass means
// "not rejected at `significance`".
TestResult ks_test(const std::vector<double>& samples, Reference ref,
                   double significance = 0.01);

// Two-sample KS test with the asymptotic p-value.
TestResult ks_two_sample(const std::vector<double>& a, const std::vector<double>& b,
                         double significance = 0.01);

// Pearson chi-square goodness of fit for categorical counts. Requires every
// expected count >= 5; smaller expectations make the asymptotics invalid and
// raise an error instead of returning garbage.
TestResult chi_square_test(const std::vector<std::uint64_t>& counts,
                           const std::vector<double>& probs,
                           double significance = 0.01);

double mean(const std::vector<double>& x);
double variance(const std::vector<double>& x);
double median(std::vector<double> x);
double autocorrelation(const std::vector<double>& x, std::size_t lag);
double pearson(const std::vector<double>& x, const std::vector<double>& y);

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
};
LineFit fit_line(const std::vector<double>& xs, const std::vector<double>& ys);

// Coupling diagnostics across two accounts' matched responses: Pearson
// correlation over flattened coordinates plus the fraction of bit-identical
// vector pairs.
struct CouplingReport {
    std::size_t pairs = 0;
    std::size_t coordinates = 0;
    double correlation = 0.0;
    double duplicate_rate = 0.0;
};
CouplingReport cross_account_correlation(const std::vector<NoiseVector>& a,
                                         const std::vector<NoiseVector>& b);

}  // namespace lads::stats
