#include "lads/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

#include "lads/error.hpp"

namespace lads::stats {
namespace {

void require_nonempty(std::size_t n, const char* what) {
    if (n == 0) throw error(errc::empty_input, std::string(what) + " needs at least one sample");
}

double reference_cdf(Reference ref, double x) {
    switch (ref) {
    case Reference::uniform01: return std::clamp(x, 0.0, 1.0);
    case Reference::std_normal: return normal_cdf(x);
    }
    return 0.0;
}

// Series for the incomplete gamma: converges fast for x < a + 1.
double gammp_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int i = 0; i < 500; ++i) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction for Q(a, x) = 1 - P(a, x): converges fast for x > a + 1.
double gammq_cf(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 500; ++i) {
        double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-16) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double kolmogorov_sf(double t) {
    if (t <= 0.0) return 1.0;
    if (t < 1.0) {
        // Jacobi theta form, accurate for small t where the alternating
        // series would need many terms.
        double sum = 0.0;
        double f = std::numbers::pi * std::numbers::pi / (8.0 * t * t);
        for (int k = 1; k <= 20; k += 2) sum += std::exp(-f * k * k);
        return 1.0 - std::sqrt(2.0 * std::numbers::pi) / t * sum;
    }
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        double term = std::exp(-2.0 * k * k * t * t);
        sum += (k % 2 == 1) ? term : -term;
        if (term < 1e-18) break;
    }
    return 2.0 * sum;
}

double kolmogorov_critical(double significance) {
    if (!(significance > 0.0 && significance < 1.0))
        throw error(errc::invalid_argument, "significance must lie in (0, 1)");
    double lo = 0.05, hi = 5.0;
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        if (kolmogorov_sf(mid) > significance) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

double gammp(double a, double x) {
    if (a <= 0.0 || x < 0.0)
        throw error(errc::invalid_argument, "gammp needs a > 0 and x >= 0");
    if (x == 0.0) return 0.0;
    return x < a + 1.0 ? gammp_series(a, x) : 1.0 - gammq_cf(a, x);
}

double chi_square_critical(std::size_t df, double significance) {
    if (df == 0) throw error(errc::invalid_argument, "chi-square needs df >= 1");
    if (!(significance > 0.0 && significance < 1.0))
        throw error(errc::invalid_argument, "significance must lie in (0, 1)");
    double target = 1.0 - significance;
    double lo = 0.0, hi = static_cast<double>(df) + 80.0 * std::sqrt(static_cast<double>(df)) + 80.0;
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        if (gammp(df / 2.0, mid / 2.0) < target) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

double normal_cdf(double x) {
    return 0.5 * std::erfc(-x * 0.70710678118654752440);
}

TestResult ks_test(const std::vector<double>& samples, Reference ref, double significance) {
    // The asymptotic critical value is only trustworthy for decently sized
    // samples; small-sample exact tables are out of scope.
    if (samples.size() < 100)
        throw error(errc::too_few_samples, "ks_test needs at least 100 samples");
    std::vector<double> s = samples;
    std::sort(s.begin(), s.end());
    std::size_t n = s.size();
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double f = reference_cdf(ref, s[i]);
        d = std::max(d, std::max(f - static_cast<double>(i) / n,
                                 static_cast<double>(i + 1) / n - f));
    }
    double root_n = std::sqrt(static_cast<double>(n));
    TestResult r;
    r.statistic = d;
    r.critical = kolmogorov_critical(significance) / root_n;
    r.p_value = kolmogorov_sf(root_n * d);
    r.pass = d < r.critical;
    return r;
}

TestResult ks_two_sample(const std::vector<double>& a, const std::vector<double>& b,
                         double significance) {
    // Asymptotic p-value; usable down to modest sample counts (rep-level
    // comparisons), unlike the one-sample gate above.
    if (a.size() < 5 || b.size() < 5)
        throw error(errc::too_few_samples, "ks_two_sample needs at least 5 samples per side");
    std::vector<double> x = a, y = b;
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    double d = 0.0;
    std::size_t i = 0, j = 0;
    while (i < x.size() && j < y.size()) {
        double v = std::min(x[i], y[j]);
        while (i < x.size() && x[i] <= v) ++i;
        while (j < y.size() && y[j] <= v) ++j;
        d = std::max(d, std::fabs(static_cast<double>(i) / x.size() -
                                  static_cast<double>(j) / y.size()));
    }
    double en = std::sqrt(static_cast<double>(x.size()) * y.size() / (x.size() + y.size()));
    TestResult r;
    r.statistic = d;
    r.critical = kolmogorov_critical(significance) / en;
    r.p_value = kolmogorov_sf((en + 0.12 + 0.11 / en) * d);
    r.pass = r.p_value > significance;
    return r;
}

TestResult chi_square_test(const std::vector<std::uint64_t>& counts,
                           const std::vector<double>& probs, double significance) {
    require_nonempty(counts.size(), "chi_square_test");
    if (counts.size() != probs.size())
        throw error(errc::dimension_mismatch, "counts and probs have different lengths");
    if (counts.size() < 2)
        throw error(errc::invalid_argument, "chi-square needs at least two categories");
    double psum = 0.0;
    for (double p : probs) {
        if (!(p > 0.0)) throw error(errc::invalid_argument, "category probabilities must be > 0");
        psum += p;
    }
    if (std::fabs(psum - 1.0) > 1e-9)
        throw error(errc::invalid_argument, "category probabilities must sum to 1");
    double total = 0.0;
    for (std::uint64_t c : counts) total += static_cast<double>(c);
    double stat = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        double expected = total * probs[i];
        if (expected < 5.0)
            throw error(errc::invalid_argument,
                        "expected count below 5; chi-square approximation invalid");
        double diff = static_cast<double>(counts[i]) - expected;
        stat += diff * diff / expected;
    }
    std::size_t df = counts.size() - 1;
    TestResult r;
    r.statistic = stat;
    r.critical = chi_square_critical(df, significance);
    r.p_value = 1.0 - gammp(df / 2.0, stat / 2.0);
    r.pass = stat < r.critical;
    return r;
}

double mean(const std::vector<double>& x) {
    require_nonempty(x.size(), "mean");
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

double variance(const std::vector<double>& x) {
    if (x.size() < 2) throw error(errc::empty_input, "variance needs at least two samples");
    double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - 1);
}

double median(std::vector<double> x) {
    require_nonempty(x.size(), "median");
    std::size_t mid = x.size() / 2;
    std::nth_element(x.begin(), x.begin() + mid, x.end());
    double hi = x[mid];
    if (x.size() % 2 == 1) return hi;
    std::nth_element(x.begin(), x.begin() + mid - 1, x.end());
    return 0.5 * (x[mid - 1] + hi);
}

double autocorrelation(const std::vector<double>& x, std::size_t lag) {
    if (x.size() <= lag)
        throw error(errc::invalid_argument, "autocorrelation lag exceeds sample length");
    double m = mean(x);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        den += (x[i] - m) * (x[i] - m);
        if (i + lag < x.size()) num += (x[i] - m) * (x[i + lag] - m);
    }
    if (den == 0.0) throw error(errc::numeric_failure, "autocorrelation of a constant sequence");
    return num / den;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size())
        throw error(errc::dimension_mismatch, "pearson inputs have different lengths");
    if (x.size() < 2) throw error(errc::empty_input, "pearson needs at least two pairs");
    double mx = mean(x), my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0)
        throw error(errc::numeric_failure, "pearson undefined for constant input");
    return sxy / std::sqrt(sxx * syy);
}

LineFit fit_line(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size())
        throw error(errc::dimension_mismatch, "fit_line inputs have different lengths");
    if (xs.size() < 2) throw error(errc::empty_input, "fit_line needs at least two points");
    double mx = mean(xs), my = mean(ys);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (sxx == 0.0) throw error(errc::numeric_failure, "fit_line needs spread in x");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    return f;
}

CouplingReport cross_account_correlation(const std::vector<NoiseVector>& a,
                                         const std::vector<NoiseVector>& b) {
    if (a.size() != b.size())
        throw error(errc::dimension_mismatch, "matched response lists differ in length");
    require_nonempty(a.size(), "cross_account_correlation");
    std::vector<double> xs, ys;
    std::size_t duplicates = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].size() != b[i].size())
            throw error(errc::dimension_mismatch, "matched responses differ in dim");
        bool same = a[i].size() > 0 &&
                    std::memcmp(a[i].data(), b[i].data(), a[i].size() * sizeof(double)) == 0;
        duplicates += same ? 1 : 0;
        xs.insert(xs.end(), a[i].begin(), a[i].end());
        ys.insert(ys.end(), b[i].begin(), b[i].end());
    }
    CouplingReport r;
    r.pairs = a.size();
    r.coordinates = xs.size();
    r.duplicate_rate = static_cast<double>(duplicates) / static_cast<double>(a.size());
    r.correlation = pearson(xs, ys);
    return r;
}

}  // namespace lads::stats
