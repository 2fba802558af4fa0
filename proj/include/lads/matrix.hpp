#pragma once

#include <cstddef>
#include <vector>

namespace lads {

// Dense row-major matrix, just big enough for this project's linear algebra.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

std::vector<double> matvec(const Matrix& m, const std::vector<double>& v);
double frobenius_norm(const Matrix& m);
// Scales m down onto the Frobenius ball of radius w (no-op if inside).
void project_frobenius(Matrix& m, double w);
// Largest singular value via power iteration on m^T m; deterministic start.
double operator_norm(const Matrix& m);

}  // namespace lads
