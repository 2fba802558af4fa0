#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "lads/error.hpp"
#include "lads/experiment.hpp"
#include "lads/matrix.hpp"
#include "lads/noise.hpp"
#include "lads/rademacher.hpp"
#include "lads/teacher.hpp"

using namespace lads;

namespace {

// n labeled queries inside the radius-r ball, labels from a bounded teacher.
std::vector<TokenSample> make_sample(std::size_t n, std::size_t dim, double r,
                                     std::size_t vocab, Seed seed) {
    SoftmaxTokenTeacher teacher = random_softmax_teacher(seed, vocab, dim, 1.0, r, 1.0);
    SampleStream g(Seed{seed.value ^ 0x515545525945ULL});
    std::vector<TokenSample> out;
    for (std::size_t i = 0; i < n; ++i) {
        QueryEmbedding q(dim);
        double norm2 = 0.0;
        for (double& v : q) {
            v = g.next_gaussian();
            norm2 += v * v;
        }
        double scale = r * 0.9 / std::max(1.0, std::sqrt(norm2));
        for (double& v : q) v *= scale;
        std::vector<double> gumbel(vocab);
        for (double& v : gumbel) v = gumbel_from_gaussian(g.next_gaussian());
        out.push_back(TokenSample{q, generate_token(teacher, q, gumbel), 1.0});
    }
    return out;
}

}  // namespace

TEST_CASE("closed-form bound at the pinned worked example") {
    std::vector<TokenSample> sample = make_sample(100, 3, 1.0, 2, Seed{21});
    RademacherEstimate res = rademacher_check(sample, 1.0, 1.0, 2, 5, 8, Seed{77});
    CHECK(res.n == 100);
    // 2 * R * W * sqrt(Y) / sqrt(n) = 2 * sqrt(2) / 10
    CHECK(std::fabs(res.bound - 0.2828427124746190) < 1e-12);
    CHECK(res.estimate > 0.0);
    CHECK(res.estimate <= res.bound);
}

TEST_CASE("bound halves when the sample size quadruples") {
    std::vector<TokenSample> small = make_sample(50, 4, 1.0, 3, Seed{5});
    std::vector<TokenSample> big = make_sample(200, 4, 1.0, 3, Seed{5});
    RademacherEstimate a = rademacher_check(small, 1.0, 2.0, 3, 5, 4, Seed{1});
    RademacherEstimate b = rademacher_check(big, 1.0, 2.0, 3, 5, 4, Seed{1});
    CHECK(b.bound == doctest::Approx(a.bound / 2.0).epsilon(1e-12));
    CHECK(b.estimate <= b.bound);
}

TEST_CASE("estimate respects the bound across instances") {
    int cell = 0;
    for (std::size_t n : {16, 64, 256}) {
        for (double w : {0.5, 1.5}) {
            std::vector<TokenSample> sample =
                make_sample(n, 6, 2.0, 8, Seed{100 + static_cast<std::uint64_t>(cell)});
            RademacherEstimate res =
                rademacher_check(sample, 2.0, w, 8, 5, 6, Seed{200 + static_cast<std::uint64_t>(cell)});
            CHECK(res.estimate <= res.bound);
            CHECK(res.estimate >= 0.0);
            ++cell;
        }
    }
}

TEST_CASE("estimates are deterministic in the seed") {
    std::vector<TokenSample> sample = make_sample(64, 4, 1.0, 4, Seed{9});
    RademacherEstimate a = rademacher_check(sample, 1.0, 1.0, 4, 6, 10, Seed{3});
    RademacherEstimate b = rademacher_check(sample, 1.0, 1.0, 4, 6, 10, Seed{3});
    CHECK(a.estimate == b.estimate);
    RademacherEstimate c = rademacher_check(sample, 1.0, 1.0, 4, 6, 10, Seed{4});
    CHECK(a.estimate != c.estimate);
}

TEST_CASE("input validation") {
    std::vector<TokenSample> tiny = make_sample(9, 3, 1.0, 2, Seed{2});
    CHECK_THROWS_AS(rademacher_check(tiny, 1.0, 1.0, 2, 5, 4, Seed{1}), error);

    std::vector<TokenSample> sample = make_sample(32, 3, 1.0, 2, Seed{2});
    CHECK_THROWS_AS(rademacher_check(sample, 1.0, 1.0, 2, 4, 4, Seed{1}), error);   // restarts
    CHECK_THROWS_AS(rademacher_check(sample, 1.0, 1.0, 2, 5, 0, Seed{1}), error);   // sign draws
    CHECK_THROWS_AS(rademacher_check(sample, 0.0, 1.0, 2, 5, 4, Seed{1}), error);   // radius
    CHECK_THROWS_AS(rademacher_check(sample, 1.0, 0.0, 2, 5, 4, Seed{1}), error);   // ball
    CHECK_THROWS_AS(rademacher_check(sample, 1.0, 1.0, 1, 5, 4, Seed{1}), error);   // vocab

    std::vector<TokenSample> outside = sample;
    for (double& v : outside[0].q) v *= 10.0;
    CHECK_THROWS_AS(rademacher_check(outside, 1.0, 1.0, 2, 5, 4, Seed{1}), error);

    std::vector<TokenSample> mislabeled = sample;
    mislabeled[3].y = 2;  // vocab is 2, labels must be < 2
    CHECK_THROWS_AS(rademacher_check(mislabeled, 1.0, 1.0, 2, 5, 4, Seed{1}), error);
}
