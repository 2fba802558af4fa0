#pragma once

#include <cstdint>
#include <vector>

#include "lads/embedding.hpp"
#include "lads/matrix.hpp"
#include "lads/seed.hpp"

namespace lads {

// One supervised token example. `weight` lets callers fold duplicated
// records into a single entry; plain datasets use weight 1.
struct TokenSample {
    QueryEmbedding q;
    std::uint32_t y = 0;
    double weight = 1.0;
};

double log_sum_exp(const std::vector<double>& z);
std::vector<double> softmax(const std::vector<double>& z);

// Cross-entropy -log softmax(theta q)_y. With ||theta||_F <= w and
// ||q|| <= r the value lies in [0, log Y + 2 r w].
double cross_entropy(const Matrix& theta, const QueryEmbedding& q, std::uint32_t y);

// Weighted average loss over a dataset, weights normalized by their sum.
double dataset_loss(const Matrix& theta, const std::vector<TokenSample>& data);

// Adds scale * d/dtheta [ loss(theta; q, y) ] into grad.
void add_ce_gradient(const Matrix& theta, const QueryEmbedding& q, std::uint32_t y,
                     double scale, Matrix& grad);

struct PgdOptions {
    std::size_t steps = 150;
    double step_size = 0.5;
    double frobenius_radius = 1.0;
};

// Full-batch projected gradient descent from `init` (projected first if it
// starts outside the ball). Throws numeric_failure if the loss leaves the
// finite range.
Matrix pgd_minimize(const std::vector<TokenSample>& data, Matrix init, const PgdOptions& opts);

// Deterministic Gaussian init with the given entry scale.
Matrix random_matrix(Seed seed, std::size_t rows, std::size_t cols, double scale);

}  // namespace lads
