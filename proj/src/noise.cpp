#include "lads/noise.hpp"

#include <cmath>
#include <numbers>

#include "lads/error.hpp"
#include "lads/philox.hpp"

namespace lads {

MixingCoefficient::MixingCoefficient(double alpha) : alpha_(alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw error(errc::invalid_argument, "mixing coefficient must lie in [0, 1]");
}

std::uint64_t stream_word(Seed seed, std::uint64_t index) {
    philox::block b = philox::encrypt({index / 4, 0, 0, 0}, {seed.value, 0});
    return b[index % 4];
}

std::vector<double> uniform_stream(Seed seed, std::size_t count) {
    std::vector<double> out;
    out.reserve(count);
    philox::block buf{};
    for (std::size_t m = 0; m < count; ++m) {
        if (m % 4 == 0) buf = philox::encrypt({m / 4, 0, 0, 0}, {seed.value, 0});
        out.push_back(open_unit(buf[m % 4]));
    }
    return out;
}

NoiseVector gaussian_noise(Seed seed, std::size_t dim) {
    std::size_t n = dim + (dim % 2);
    std::vector<double> u = uniform_stream(seed, n);
    NoiseVector z(dim);
    for (std::size_t k = 0; k + 1 < n; k += 2) {
        double r = std::sqrt(-2.0 * std::log(u[k]));
        double t = 2.0 * std::numbers::pi * u[k + 1];
        z[k] = r * std::cos(t);
        if (k + 1 < dim) z[k + 1] = r * std::sin(t);
    }
    return z;
}

NoiseVector gumbel_noise(Seed seed, std::size_t dim) {
    std::vector<double> u = uniform_stream(seed, dim);
    NoiseVector g(dim);
    for (std::size_t k = 0; k < dim; ++k) g[k] = gumbel_from_uniform(u[k]);
    return g;
}

NoiseVector mix_noise(const NoiseVector& shared, const NoiseVector& fresh,
                      MixingCoefficient alpha) {
    if (shared.size() != fresh.size())
        throw error(errc::dimension_mismatch, "mix_noise inputs have different dims");
    double a = std::sqrt(alpha.value());
    double b = std::sqrt(1.0 - alpha.value());
    NoiseVector out(shared.size());
    for (std::size_t i = 0; i < shared.size(); ++i) out[i] = a * shared[i] + b * fresh[i];
    return out;
}

double gumbel_from_uniform(double u) {
    if (!(u > 0.0 && u < 1.0))
        throw error(errc::invalid_argument, "gumbel transform needs u in (0, 1)");
    return -std::log(-std::log(u));
}

double gumbel_from_gaussian(double z) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    if (z < 0.0) {
        // log Phi(z) straight from erfc keeps precision deep in the left tail.
        double log_u = std::log(0.5 * std::erfc(-z * inv_sqrt2));
        return -std::log(-log_u);
    }
    // Right tail: 1 - Phi(z) is tiny, so form log(u) as log1p(-q).
    double q = 0.5 * std::erfc(z * inv_sqrt2);
    return -std::log(-std::log1p(-q));
}

NoiseVector gumbel_from_gaussian(const NoiseVector& z) {
    NoiseVector g(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) g[i] = gumbel_from_gaussian(z[i]);
    return g;
}

}  // namespace lads
