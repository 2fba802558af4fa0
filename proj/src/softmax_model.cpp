#include "lads/softmax_model.hpp"

#include <algorithm>
#include <cmath>

#include "lads/error.hpp"
#include "lads/noise.hpp"

namespace lads {

std::vector<double> matvec(const Matrix& m, const std::vector<double>& v) {
    if (v.size() != m.cols)
        throw error(errc::dimension_mismatch, "matvec dims do not match");
    std::vector<double> out(m.rows, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
        double s = 0.0;
        const double* row = m.data.data() + r * m.cols;
        for (std::size_t c = 0; c < m.cols; ++c) s += row[c] * v[c];
        out[r] = s;
    }
    return out;
}

double frobenius_norm(const Matrix& m) {
    double s = 0.0;
    for (double v : m.data) s += v * v;
    return std::sqrt(s);
}

void project_frobenius(Matrix& m, double w) {
    if (!(w > 0.0)) throw error(errc::invalid_argument, "projection radius must be positive");
    double n = frobenius_norm(m);
    if (n > w) {
        double scale = w / n;
        for (double& v : m.data) v *= scale;
    }
}

double operator_norm(const Matrix& m) {
    if (m.rows == 0 || m.cols == 0)
        throw error(errc::empty_input, "operator norm of an empty matrix");
    // Power iteration on m^T m with a fixed pseudorandom start so results
    // are reproducible; restart guards against an orthogonal start vector.
    for (std::uint64_t attempt = 0; attempt < 4; ++attempt) {
        NoiseVector v = gaussian_noise(Seed{0x9e3779b9ull + attempt}, m.cols);
        double vn = 0.0;
        for (double x : v) vn += x * x;
        vn = std::sqrt(vn);
        if (vn == 0.0) continue;
        for (double& x : v) x /= vn;
        double sigma = 0.0;
        for (int it = 0; it < 2000; ++it) {
            std::vector<double> mv = matvec(m, v);
            // w = m^T (m v)
            std::vector<double> w(m.cols, 0.0);
            for (std::size_t r = 0; r < m.rows; ++r)
                for (std::size_t c = 0; c < m.cols; ++c)
                    w[c] += m.data[r * m.cols + c] * mv[r];
            double wn = 0.0;
            for (double x : w) wn += x * x;
            wn = std::sqrt(wn);
            if (wn == 0.0) return 0.0;
            for (std::size_t c = 0; c < m.cols; ++c) w[c] /= wn;
            double new_sigma = 0.0;
            std::vector<double> mw = matvec(m, w);
            for (double x : mw) new_sigma += x * x;
            new_sigma = std::sqrt(new_sigma);
            v = std::move(w);
            if (std::fabs(new_sigma - sigma) <= 1e-14 * std::max(1.0, new_sigma)) {
                sigma = new_sigma;
                break;
            }
            sigma = new_sigma;
        }
        if (sigma > 0.0 || frobenius_norm(m) == 0.0) return sigma;
    }
    throw error(errc::numeric_failure, "power iteration failed to start");
}

double log_sum_exp(const std::vector<double>& z) {
    if (z.empty()) throw error(errc::empty_input, "log_sum_exp of empty vector");
    double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    return m + std::log(s);
}

std::vector<double> softmax(const std::vector<double>& z) {
    double lse = log_sum_exp(z);
    std::vector<double> p(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) p[i] = std::exp(z[i] - lse);
    return p;
}

double cross_entropy(const Matrix& theta, const QueryEmbedding& q, std::uint32_t y) {
    if (y >= theta.rows) throw error(errc::invalid_argument, "token index out of vocabulary");
    std::vector<double> z = matvec(theta, q);
    return log_sum_exp(z) - z[y];
}

double dataset_loss(const Matrix& theta, const std::vector<TokenSample>& data) {
    if (data.empty()) throw error(errc::empty_input, "dataset_loss over empty data");
    double num = 0.0, den = 0.0;
    for (const TokenSample& s : data) {
        num += s.weight * cross_entropy(theta, s.q, s.y);
        den += s.weight;
    }
    if (den <= 0.0) throw error(errc::invalid_argument, "dataset weights must sum positive");
    return num / den;
}

void add_ce_gradient(const Matrix& theta, const QueryEmbedding& q, std::uint32_t y,
                     double scale, Matrix& grad) {
    if (grad.rows != theta.rows || grad.cols != theta.cols)
        throw error(errc::dimension_mismatch, "gradient accumulator shape mismatch");
    std::vector<double> p = softmax(matvec(theta, q));
    p[y] -= 1.0;
    for (std::size_t r = 0; r < theta.rows; ++r) {
        double pr = scale * p[r];
        double* row = grad.data.data() + r * grad.cols;
        for (std::size_t c = 0; c < theta.cols; ++c) row[c] += pr * q[c];
    }
}

Matrix pgd_minimize(const std::vector<TokenSample>& data, Matrix init, const PgdOptions& opts) {
    if (data.empty()) throw error(errc::empty_input, "pgd_minimize over empty data");
    double total_weight = 0.0;
    for (const TokenSample& s : data) total_weight += s.weight;
    if (total_weight <= 0.0)
        throw error(errc::invalid_argument, "dataset weights must sum positive");

    Matrix theta = std::move(init);
    project_frobenius(theta, opts.frobenius_radius);
    for (std::size_t step = 0; step < opts.steps; ++step) {
        Matrix grad(theta.rows, theta.cols);
        for (const TokenSample& s : data)
            add_ce_gradient(theta, s.q, s.y, s.weight / total_weight, grad);
        for (std::size_t i = 0; i < theta.data.size(); ++i) {
            theta.data[i] -= opts.step_size * grad.data[i];
            if (!std::isfinite(theta.data[i]))
                throw error(errc::numeric_failure,
                            "pgd produced a non-finite parameter (step size too large?)");
        }
        project_frobenius(theta, opts.frobenius_radius);
    }
    return theta;
}

Matrix random_matrix(Seed seed, std::size_t rows, std::size_t cols, double scale) {
    Matrix m(rows, cols);
    NoiseVector g = gaussian_noise(seed, rows * cols);
    for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = scale * g[i];
    return m;
}

}  // namespace lads
