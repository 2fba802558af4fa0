#include "lads/rademacher.hpp"

#include <cmath>

#include "lads/error.hpp"
#include "lads/experiment.hpp"
#include "lads/matrix.hpp"
#include "lads/philox.hpp"

namespace lads {
namespace {

constexpr std::size_t kAscentSteps = 60;
constexpr double kAscentStep = 0.5;

double signed_mean_loss(const Matrix& theta, const std::vector<TokenSample>& sample,
                        const std::vector<double>& signs) {
    double sum = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i)
        sum += signs[i] * cross_entropy(theta, sample[i].q, sample[i].y);
    return sum / static_cast<double>(sample.size());
}

// Maximizes |(1/n) sum_i sigma_i ell(theta; z_i)| over the W ball from one start.
double ascend(Matrix theta, const std::vector<TokenSample>& sample,
              const std::vector<double>& signs, double w) {
    const double n = static_cast<double>(sample.size());
    project_frobenius(theta, w);
    double best = std::fabs(signed_mean_loss(theta, sample, signs));
    for (std::size_t step = 0; step < kAscentSteps; ++step) {
        double value = signed_mean_loss(theta, sample, signs);
        if (!std::isfinite(value))
            throw error(errc::numeric_failure, "ascent objective left the finite range");
        double direction = value >= 0.0 ? 1.0 : -1.0;
        Matrix grad(theta.rows, theta.cols);
        for (std::size_t i = 0; i < sample.size(); ++i)
            add_ce_gradient(theta, sample[i].q, sample[i].y, direction * signs[i] / n, grad);
        for (std::size_t j = 0; j < theta.data.size(); ++j)
            theta.data[j] += kAscentStep * grad.data[j];
        project_frobenius(theta, w);
        best = std::max(best, std::fabs(signed_mean_loss(theta, sample, signs)));
    }
    return best;
}

}  // namespace

RademacherEstimate rademacher_check(const std::vector<TokenSample>& sample, double r_x, double w,
                                    std::size_t vocab, std::size_t restarts,
                                    std::size_t sign_draws, Seed seed) {
    const std::size_t n = sample.size();
    if (n < 10) throw error(errc::too_few_samples, "complexity check needs at least 10 samples");
    if (restarts < 5) throw error(errc::invalid_argument, "need at least 5 restarts");
    if (sign_draws < 1) throw error(errc::invalid_argument, "need at least one sign draw");
    if (!(r_x > 0.0) || !(w > 0.0))
        throw error(errc::invalid_argument, "r_x and w must be positive");
    if (vocab < 2) throw error(errc::invalid_argument, "vocab needs at least two tokens");
    std::size_t q_dim = sample.front().q.size();
    for (const TokenSample& s : sample) {
        if (s.q.size() != q_dim)
            throw error(errc::dimension_mismatch, "samples must share one query dim");
        if (norm(s.q) > r_x * (1.0 + 1e-12))
            throw error(errc::invalid_argument, "sample query norm exceeds r_x");
        if (s.y >= vocab) throw error(errc::invalid_argument, "label outside the vocabulary");
    }

    SampleStream stream(seed);
    std::vector<double> signs(n);
    double total = 0.0;
    for (std::size_t d = 0; d < sign_draws; ++d) {
        for (double& s : signs) s = stream.next_uniform() < 0.5 ? -1.0 : 1.0;
        double best = 0.0;
        for (std::size_t r = 0; r < restarts; ++r) {
            std::uint64_t w0 = philox::encrypt({d, r, 0, 0}, {seed.value, 0x524144535452ull})[0];
            Matrix start = random_matrix(Seed{w0}, vocab, q_dim, w);
            best = std::max(best, ascend(std::move(start), sample, signs, w));
        }
        total += best;
    }

    RademacherEstimate out;
    out.n = n;
    out.estimate = total / static_cast<double>(sign_draws);
    out.bound = 2.0 * r_x * w * std::sqrt(static_cast<double>(vocab)) /
                std::sqrt(static_cast<double>(n));
    if (out.estimate > out.bound)
        throw error(errc::numeric_failure, "complexity estimate exceeded the closed-form bound");
    return out;
}

}  // namespace lads
