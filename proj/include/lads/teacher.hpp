#pragma once

#include <cstdint>
#include <string>

#include "lads/embedding.hpp"
#include "lads/matrix.hpp"
#include "lads/noise.hpp"

namespace lads {

// x = A q + sigma * eps. Immutable; generation is pure.
class LinearGaussianTeacher {
  public:
    LinearGaussianTeacher(Matrix a, double sigma);

    const Matrix& weights() const noexcept { return a_; }
    double sigma() const noexcept { return sigma_; }
    std::size_t out_dim() const noexcept { return a_.rows; }
    std::size_t q_dim() const noexcept { return a_.cols; }
    // Certified Lipschitz constant in q: the operator norm of A.
    double lipschitz_bound() const noexcept { return op_norm_; }

    std::string to_text() const;
    static LinearGaussianTeacher from_text(const std::string& text);
    void save(const std::string& path) const;
    static LinearGaussianTeacher load(const std::string& path);

  private:
    Matrix a_;
    double sigma_;
    double op_norm_;
};

NoiseVector generate_continuous(const LinearGaussianTeacher& teacher, const QueryEmbedding& q,
                                const NoiseVector& eps);

// Token sampler: argmax_i <theta_i, q> + eps_i with eps standard Gumbel.
// theta must satisfy ||theta||_F <= frob_bound.
class SoftmaxTokenTeacher {
  public:
    SoftmaxTokenTeacher(Matrix theta, double frob_bound, double input_bound);

    const Matrix& weights() const noexcept { return theta_; }
    std::size_t vocab() const noexcept { return theta_.rows; }
    std::size_t q_dim() const noexcept { return theta_.cols; }
    double frob_bound() const noexcept { return frob_bound_; }
    double input_bound() const noexcept { return input_bound_; }
    // Certified Lipschitz constant of the logit map q -> theta q.
    double lipschitz_bound() const noexcept { return op_norm_; }

    std::vector<double> logits(const QueryEmbedding& q) const;
    std::vector<double> token_probs(const QueryEmbedding& q) const;

    std::string to_text() const;
    static SoftmaxTokenTeacher from_text(const std::string& text);
    void save(const std::string& path) const;
    static SoftmaxTokenTeacher load(const std::string& path);

  private:
    Matrix theta_;
    double frob_bound_;
    double input_bound_;
    double op_norm_;
};

std::uint32_t generate_token(const SoftmaxTokenTeacher& teacher, const QueryEmbedding& q,
                             const NoiseVector& eps_gumbel);

LinearGaussianTeacher random_linear_teacher(Seed seed, std::size_t out_dim, std::size_t q_dim,
                                            double sigma, double entry_scale);
SoftmaxTokenTeacher random_softmax_teacher(Seed seed, std::size_t vocab, std::size_t q_dim,
                                           double frob_bound, double input_bound,
                                           double entry_scale);

}  // namespace lads
