#pragma once

#include <cstdint>
#include <vector>

#include "lads/seed.hpp"

namespace lads {

using NoiseVector = std::vector<double>;

// Convex mixing weight for shared vs fresh noise. alpha = 1 is fully shared
// (deterministic given the seed), alpha = 0 fully fresh.
class MixingCoefficient {
  public:
    explicit MixingCoefficient(double alpha);
    double value() const noexcept { return alpha_; }

  private:
    double alpha_;
};

// Word `index` of the seed's raw 64-bit stream.
std::uint64_t stream_word(Seed seed, std::uint64_t index);

// First `count` words mapped into the open interval (0, 1). Purely a
// function of (seed, index): no generator state is carried between calls.
std::vector<double> uniform_stream(Seed seed, std::size_t count);

// Standard normal draws via Box-Muller on consecutive uniform pairs. Odd
// dims consume dim + 1 uniforms and keep the cosine branch of the last pair.
NoiseVector gaussian_noise(Seed seed, std::size_t dim);

// Standard Gumbel draws, entry k = -log(-log(u_k)).
NoiseVector gumbel_noise(Seed seed, std::size_t dim);

// sqrt(alpha) * shared + sqrt(1 - alpha) * fresh. If both inputs are unit
// Gaussian and independent, the output is again exactly unit Gaussian.
NoiseVector mix_noise(const NoiseVector& shared, const NoiseVector& fresh,
                      MixingCoefficient alpha);

double gumbel_from_uniform(double u);

// Probability-integral-transform bridge: maps a standard normal draw to a
// standard Gumbel draw monotonically, so equal Gaussian inputs give equal
// Gumbel outputs. Tail-stable via erfc on both sides.
double gumbel_from_gaussian(double z);
NoiseVector gumbel_from_gaussian(const NoiseVector& z);

}  // namespace lads
