#pragma once

#include <cstddef>
#include <vector>

#include "lads/seed.hpp"
#include "lads/softmax_model.hpp"

namespace lads {

struct RademacherEstimate {
    std::size_t n = 0;
    double estimate = 0.0;  // Monte Carlo lower estimate of the empirical complexity
    double bound = 0.0;     // closed form 2 R W sqrt(Y) / sqrt(n)
};

// Empirical Rademacher complexity check for the cross-entropy loss class of
// softmax-linear students on the Frobenius W ball, over samples with
// ||q|| <= r_x and labels below `vocab`. For each of `sign_draws` Rademacher
// sign vectors, |(1/n) sum_i sigma_i ell(theta; q_i, y_i)| is maximized by
// projected gradient ascent from `restarts` random starts; the estimate is
// the average of the maxima (a lower estimate, which is the safe direction
// for asserting estimate <= bound). Throws numeric_failure if the estimate
// ever exceeds the closed-form bound or the optimizer leaves the finite
// range.
RademacherEstimate rademacher_check(const std::vector<TokenSample>& sample, double r_x, double w,
                                    std::size_t vocab, std::size_t restarts,
                                    std::size_t sign_draws, Seed seed);

}  // namespace lads
