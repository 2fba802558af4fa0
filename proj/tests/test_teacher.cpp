#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <cstdio>

#include "lads/error.hpp"
#include "lads/softmax_model.hpp"
#include "lads/stats.hpp"
#include "lads/teacher.hpp"

using namespace lads;

namespace {

Matrix identity(std::size_t n, double scale) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = scale;
    return m;
}

double svd_top_singular(const Matrix& m) {
    Eigen::MatrixXd e(m.rows, m.cols);
    for (std::size_t r = 0; r < m.rows; ++r)
        for (std::size_t c = 0; c < m.cols; ++c) e(r, c) = m.at(r, c);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(e);
    return svd.singularValues()(0);
}

}  // namespace

TEST_CASE("operator norm worked examples and SVD oracle") {
    CHECK(operator_norm(identity(4, 1.0)) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(operator_norm(identity(4, 2.0)) == doctest::Approx(2.0).epsilon(1e-9));
    for (std::uint64_t s = 0; s < 20; ++s) {
        Matrix m = random_matrix(Seed{2000 + s}, 5 + s % 4, 3 + s % 5, 1.0);
        CHECK(operator_norm(m) == doctest::Approx(svd_top_singular(m)).epsilon(1e-6));
    }
    Matrix zero(3, 3);
    CHECK(operator_norm(zero) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("matrix helpers") {
    Matrix m(2, 3);
    m.data = {1, 2, 3, 4, 5, 6};
    CHECK(matvec(m, {1.0, 0.0, -1.0}) == std::vector<double>{-2.0, -2.0});
    CHECK_THROWS_AS(matvec(m, {1.0}), error);
    CHECK(frobenius_norm(m) == doctest::Approx(std::sqrt(91.0)).epsilon(1e-12));
    Matrix p = m;
    project_frobenius(p, 1.0);
    CHECK(frobenius_norm(p) == doctest::Approx(1.0).epsilon(1e-12));
    Matrix inside = m;
    project_frobenius(inside, 100.0);
    CHECK(inside == m);
}

TEST_CASE("linear teacher generation") {
    LinearGaussianTeacher t(identity(3, 1.0), 0.5);
    CHECK(t.lipschitz_bound() == doctest::Approx(1.0).epsilon(1e-9));

    QueryEmbedding q{1.0, -2.0, 0.25};
    NoiseVector zero(3, 0.0);
    CHECK(generate_continuous(t, q, zero) == NoiseVector{1.0, -2.0, 0.25});

    NoiseVector eps{1.0, 1.0, 1.0};
    NoiseVector x1 = generate_continuous(t, q, eps);
    NoiseVector x2 = generate_continuous(t, q, eps);
    CHECK(x1 == x2);
    CHECK(x1 == NoiseVector{1.5, -1.5, 0.75});

    CHECK_THROWS_AS(generate_continuous(t, {1.0}, eps), error);
    CHECK_THROWS_AS(generate_continuous(t, q, {1.0}), error);
    CHECK_THROWS_AS(LinearGaussianTeacher(identity(2, 1.0), 0.0), error);
}

TEST_CASE("lipschitz property holds on sampled pairs") {
    LinearGaussianTeacher t = random_linear_teacher(Seed{404}, 6, 4, 0.3, 1.2);
    double lip = t.lipschitz_bound();
    NoiseVector raw = gaussian_noise(Seed{405}, 4 * 2 * 10000);
    NoiseVector eps = gaussian_noise(Seed{406}, 6);
    for (std::size_t i = 0; i < 10000; ++i) {
        QueryEmbedding qa(raw.begin() + 8 * i, raw.begin() + 8 * i + 4);
        QueryEmbedding qb(raw.begin() + 8 * i + 4, raw.begin() + 8 * i + 8);
        NoiseVector xa = generate_continuous(t, qa, eps);
        NoiseVector xb = generate_continuous(t, qb, eps);
        double dx = 0.0, dq = 0.0;
        for (std::size_t k = 0; k < xa.size(); ++k) dx += (xa[k] - xb[k]) * (xa[k] - xb[k]);
        for (std::size_t k = 0; k < qa.size(); ++k) dq += (qa[k] - qb[k]) * (qa[k] - qb[k]);
        CHECK(std::sqrt(dx) <= lip * std::sqrt(dq) * (1.0 + 1e-9));
    }
}

TEST_CASE("token teacher construction and bounds") {
    Matrix theta(2, 2);
    theta.data = {std::log(2.0), 0.0, 0.0, 0.0};
    SoftmaxTokenTeacher t(theta, 1.0, 1.0);
    CHECK(t.vocab() == 2);
    CHECK(t.lipschitz_bound() <= t.frob_bound() + 1e-9);

    Matrix big(2, 2);
    big.data = {10.0, 0.0, 0.0, 0.0};
    CHECK_THROWS_AS(SoftmaxTokenTeacher(big, 1.0, 1.0), error);
    CHECK_THROWS_AS(SoftmaxTokenTeacher(Matrix(1, 2), 1.0, 1.0), error);
}

TEST_CASE("gumbel-max frequencies: equal logits are a fair coin") {
    Matrix theta(2, 1);
    SoftmaxTokenTeacher t(theta, 1.0, 1.0);
    QueryEmbedding q{1.0};
    std::vector<std::uint64_t> counts(2, 0);
    for (std::uint64_t i = 0; i < 100000; ++i)
        ++counts[generate_token(t, q, gumbel_noise(Seed{700000 + i}, 2))];
    stats::TestResult r = stats::chi_square_test(counts, {0.5, 0.5}, 0.01);
    CHECK(r.pass);
}

TEST_CASE("gumbel-max frequencies: logits [ln 2, 0] give [2/3, 1/3]") {
    Matrix theta(2, 1);
    theta.data = {std::log(2.0), 0.0};
    SoftmaxTokenTeacher t(theta, 1.0, 1.0);
    QueryEmbedding q{1.0};
    std::size_t n = 100000, first = 0;
    for (std::uint64_t i = 0; i < n; ++i)
        if (generate_token(t, q, gumbel_noise(Seed{900000 + i}, 2)) == 0) ++first;
    double freq = static_cast<double>(first) / static_cast<double>(n);
    CHECK(std::fabs(freq - 2.0 / 3.0) < 0.01);
}

TEST_CASE("gumbel-max matches softmax for bigger vocabularies") {
    for (std::size_t vocab : {8ul, 32ul}) {
        SoftmaxTokenTeacher t =
            random_softmax_teacher(Seed{4100 + vocab}, vocab, 4, 3.0, 2.0, 0.8);
        QueryEmbedding q{0.8, -0.3, 0.5, 0.1};
        std::vector<double> probs = t.token_probs(q);
        std::vector<std::uint64_t> counts(vocab, 0);
        std::size_t n = 100000;
        for (std::uint64_t i = 0; i < n; ++i)
            ++counts[generate_token(t, q, gumbel_noise(Seed{1000000 * vocab + i}, vocab))];
        stats::TestResult r = stats::chi_square_test(counts, probs, 0.01);
        CHECK(r.pass);
    }
}

TEST_CASE("shared gumbel noise forces identical tokens") {
    SoftmaxTokenTeacher t = random_softmax_teacher(Seed{808}, 8, 4, 3.0, 2.0, 0.8);
    QueryEmbedding q{0.1, 0.2, 0.3, 0.4};
    NoiseVector eps = gumbel_noise(Seed{333}, 8);
    CHECK(generate_token(t, q, eps) == generate_token(t, q, eps));
    CHECK_THROWS_AS(generate_token(t, q, gumbel_noise(Seed{333}, 4)), error);
}

TEST_CASE("argmax ties break to the lowest index") {
    Matrix theta(3, 1);
    SoftmaxTokenTeacher t(theta, 1.0, 1.0);
    CHECK(generate_token(t, {1.0}, NoiseVector{0.5, 0.5, 0.5}) == 0);
    CHECK(generate_token(t, {1.0}, NoiseVector{0.5, 0.9, 0.9}) == 1);
}

TEST_CASE("teacher files round trip") {
    LinearGaussianTeacher lt = random_linear_teacher(Seed{11}, 3, 2, 0.25, 1.0);
    LinearGaussianTeacher lt2 = LinearGaussianTeacher::from_text(lt.to_text());
    CHECK(lt2.weights() == lt.weights());
    CHECK(lt2.sigma() == lt.sigma());

    SoftmaxTokenTeacher st = random_softmax_teacher(Seed{12}, 5, 3, 2.0, 1.5, 0.6);
    SoftmaxTokenTeacher st2 = SoftmaxTokenTeacher::from_text(st.to_text());
    CHECK(st2.weights() == st.weights());
    CHECK(st2.frob_bound() == st.frob_bound());
    CHECK(st2.input_bound() == st.input_bound());

    std::string path = "test_teacher_roundtrip.txt";
    st.save(path);
    SoftmaxTokenTeacher st3 = SoftmaxTokenTeacher::load(path);
    CHECK(st3.weights() == st.weights());
    std::remove(path.c_str());

    CHECK_THROWS_AS(LinearGaussianTeacher::from_text(st.to_text()), error);
    CHECK_THROWS_AS(SoftmaxTokenTeacher::from_text("garbage"), error);
    CHECK_THROWS_AS(SoftmaxTokenTeacher::load("missing_file.txt"), error);
}

TEST_CASE("softmax helpers") {
    std::vector<double> z{std::log(2.0), 0.0};
    std::vector<double> p = softmax(z);
    CHECK(p[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(log_sum_exp({1000.0, 1000.0}) == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-12));

    // Cross entropy of the true logits equals the softmax log-loss.
    Matrix theta(2, 1);
    theta.data = {std::log(2.0), 0.0};
    CHECK(cross_entropy(theta, {1.0}, 0) == doctest::Approx(-std::log(2.0 / 3.0)).epsilon(1e-12));
    CHECK_THROWS_AS(cross_entropy(theta, {1.0}, 7), error);
}

TEST_CASE("pgd training basics") {
    // Zero steps returns the (projected) init unchanged.
    std::vector<TokenSample> data{{{1.0, 0.0}, 0, 1.0}, {{0.0, 1.0}, 1, 1.0}};
    Matrix init = random_matrix(Seed{55}, 2, 2, 0.01);
    PgdOptions zero{.steps = 0, .step_size = 0.5, .frobenius_radius = 3.0};
    CHECK(pgd_minimize(data, init, zero) == init);

    PgdOptions opts{.steps = 300, .step_size = 1.0, .frobenius_radius = 3.0};
    Matrix fit = pgd_minimize(data, init, opts);
    CHECK(frobenius_norm(fit) <= 3.0 + 1e-12);
    CHECK(dataset_loss(fit, data) < dataset_loss(init, data));
    // The fitted model separates the two training points.
    CHECK(matvec(fit, {1.0, 0.0})[0] > matvec(fit, {1.0, 0.0})[1]);
    CHECK(matvec(fit, {0.0, 1.0})[1] > matvec(fit, {0.0, 1.0})[0]);

    CHECK_THROWS_AS(pgd_minimize({}, init, opts), error);
}
