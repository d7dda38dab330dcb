#include <doctest.h>

#include <cmath>
#include <limits>

#include "caki/error.hpp"
#include "caki/numerics.hpp"
#include "caki/random.hpp"
#include "oracle.hpp"

using namespace caki;

namespace {

Vector random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
    Vector v(n);
    for (double& x : v) x = scale * gaussian(rng);
    return v;
}

}  // namespace

TEST_CASE("softmax of equal scores is uniform") {
    const Vector p = softmax(Vector{0.0, 0.0}, 1.0);
    CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("softmax of 1,2,3") {
    const Vector p = softmax(Vector{1.0, 2.0, 3.0}, 1.0);
    CHECK(std::abs(p[0] - 0.0900305731703805) < 1e-12);
    CHECK(std::abs(p[1] - 0.2447284710547976) < 1e-12);
    CHECK(std::abs(p[2] - 0.6652409557748219) < 1e-12);
}

TEST_CASE("temperature changes the distribution but not its argmax") {
    const Vector sharp = softmax(Vector{2.0, 1.0}, 0.5);
    const Vector soft = softmax(Vector{2.0, 1.0}, 2.0);
    CHECK(sharp != soft);
    CHECK(argmax(sharp) == 0);
    CHECK(argmax(soft) == 0);
}

TEST_CASE("softmax matches the plain formula and sums to one") {
    Rng rng(11);
    for (std::size_t n : {1u, 2u, 7u, 64u, 4096u}) {
        const Vector s = random_vector(rng, n, 3.0);
        for (double tau : {0.1, 0.6, 1.0, 1.4, 10.0}) {
            const Vector p = softmax(s, tau);
            double sum = 0.0;
            for (double x : p) {
                CHECK(x > 0.0);
                CHECK(x <= 1.0);
                sum += x;
            }
            CHECK(std::abs(sum - 1.0) < 1e-12);
            CHECK(argmax(p) == argmax(s));
            if (n <= 64) {
                const Vector ref = oracle::naive_softmax(s, tau);
                for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(p[i] - ref[i]) < 1e-12);
            }
        }
    }
}

TEST_CASE("softmax is stable for large scores") {
    const Vector p = softmax(Vector{1000.0, 999.0}, 1.0);
    CHECK(all_finite(p));
    CHECK(p[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
}

TEST_CASE("softmax keeps ties at the lowest index") {
    CHECK(argmax(softmax(Vector{1.0, 3.0, 3.0, 0.0}, 0.7)) == 1);
    CHECK(argmax(Vector{5.0, 5.0}) == 0);
}

TEST_CASE("softmax rejects bad input") {
    CHECK_THROWS_AS(softmax(Vector{1.0}, 0.0), InvalidArgument);
    CHECK_THROWS_AS(softmax(Vector{1.0}, -1.0), InvalidArgument);
    CHECK_THROWS_AS(softmax(Vector{}, 1.0), InvalidArgument);
    CHECK_THROWS_AS(softmax(Vector{1.0, std::nan("")}, 1.0), InvalidArgument);
    CHECK_THROWS_AS(softmax(Vector{std::numeric_limits<double>::infinity()}, 1.0), InvalidArgument);
}

TEST_CASE("cosine") {
    SUBCASE("identical unit vectors") {
        const Vector a = normalized(Vector{1.0, 2.0, -2.0});
        CHECK(cosine(a, a) == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("orthogonal axes") { CHECK(cosine(Vector{1.0, 0.0}, Vector{0.0, 3.0}) == 0.0); }
    SUBCASE("seeded vectors against the naive formula") {
        Rng rng(5);
        for (int t = 0; t < 50; ++t) {
            const Vector a = random_vector(rng, 8);
            const Vector b = random_vector(rng, 8);
            const double c = cosine(a, b);
            CHECK(std::abs(c - oracle::naive_cosine(a, b)) < 1e-14);
            CHECK(c == cosine(b, a));
            CHECK(std::abs(c) <= 1.0 + 1e-12);
        }
    }
    SUBCASE("zero norm") {
        CHECK_THROWS_AS(cosine(Vector{0.0, 0.0}, Vector{1.0, 0.0}), DegenerateInput);
        CHECK_THROWS_AS(normalized(Vector{0.0, 0.0}), DegenerateInput);
    }
    SUBCASE("length mismatch") { CHECK_THROWS_AS(cosine(Vector{1.0}, Vector{1.0, 0.0}), InvalidArgument); }
}

TEST_CASE("cross entropy") {
    CHECK(cross_entropy(Vector{0.0, 1.0, 0.0}, 1) == 0.0);
    CHECK(cross_entropy(Vector{0.25, 0.25, 0.25, 0.25}, 2) == doctest::Approx(std::log(4.0)));
    CHECK(std::abs(cross_entropy(Vector{0.7, 0.2, 0.1}, 1) - 1.6094379124341003) < 1e-12);
    CHECK(cross_entropy(Vector{1.0, 0.0}, 1) == doctest::Approx(-std::log(kLogFloor)));
    CHECK_THROWS_AS(cross_entropy(Vector{0.5, 0.5}, 2), InvalidArgument);

    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
        const Vector s = random_vector(rng, 9);
        const Vector p = softmax(s, 0.8);
        std::size_t best = 0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            CHECK(cross_entropy(p, i) >= 0.0);
            if (cross_entropy(p, i) < cross_entropy(p, best)) best = i;
        }
        CHECK(best == argmax(s));
    }
}

TEST_CASE("matvec and mean_rows") {
    const Matrix m(2, 3, Vector{1, 2, 3, 4, 5, 6});
    CHECK(matvec(m, Vector{1, 0, -1}) == Vector{-2, -2});
    CHECK(matvec_transposed(m, Vector{1, 1}) == Vector{5, 7, 9});
    CHECK(mean_rows(m) == Vector{2.5, 3.5, 4.5});
    CHECK_THROWS_AS(matvec(m, Vector{1, 2}), InvalidArgument);
}

TEST_CASE("AdamW default hyperparameters") {
    const AdamWHyper h;
    CHECK(h.learning_rate == 0.005);
    CHECK(h.beta1 == 0.9);
    CHECK(h.beta2 == 0.999);
    CHECK(h.epsilon == 1e-8);
    CHECK(h.weight_decay == 0.01);
}

TEST_CASE("AdamW zero gradient without decay leaves parameters alone") {
    const Matrix p(2, 2, Vector{1.0, -2.0, 0.5, 3.0});
    AdamWHyper h;
    h.weight_decay = 0.0;
    const AdamWResult r = adamw_step(p, Matrix(2, 2), AdamWState::zeros_like(p), h);
    CHECK(r.params == p);
    CHECK(r.state.step_count == 1);
}

TEST_CASE("AdamW single step matches a hand unroll") {
    AdamWHyper h;
    h.weight_decay = 0.0;
    const Matrix p(1, 1, 1.0);
    const Matrix g(1, 1, 1.0);
    const AdamWResult r = adamw_step(p, g, AdamWState::zeros_like(p), h);
    const double m = (1 - 0.9) * 1.0;
    const double v = (1 - 0.999) * 1.0;
    const double mhat = m / (1 - 0.9);
    const double vhat = v / (1 - 0.999);
    const double expected = 1.0 - 0.005 * mhat / (std::sqrt(vhat) + 1e-8);
    CHECK(std::abs(r.params(0, 0) - expected) < 1e-12);
    CHECK(std::abs(r.params(0, 0) - (1.0 - 0.005 / (1.0 + 1e-8))) < 1e-12);
}

TEST_CASE("AdamW weight decay is decoupled") {
    AdamWHyper h;
    h.weight_decay = 0.1;
    const Matrix p(1, 1, 2.0);
    const AdamWResult r = adamw_step(p, Matrix(1, 1, 0.0), AdamWState::zeros_like(p), h);
    // zero gradient: only the decay term moves the parameter
    CHECK(std::abs(r.params(0, 0) - 2.0 * (1.0 - 0.005 * 0.1)) < 1e-15);
}

TEST_CASE("AdamW is deterministic and keeps second moments nonnegative") {
    Rng rng(9);
    Matrix p(3, 4, random_vector(rng, 12));
    AdamWState a = AdamWState::zeros_like(p);
    AdamWState b = a;
    Matrix pa = p;
    Matrix pb = p;
    for (int step = 0; step < 10; ++step) {
        const Matrix g(3, 4, random_vector(rng, 12));
        adamw_update(pa, g, a, AdamWHyper{});
        const AdamWResult r = adamw_step(pb, g, b, AdamWHyper{});
        pb = r.params;
        b = r.state;
    }
    CHECK(pa == pb);
    CHECK(a.step_count == 10);
    for (double x : a.second_moment.values()) CHECK(x >= 0.0);
}

TEST_CASE("AdamW rejects mismatched shapes and bad hyperparameters") {
    const Matrix p(2, 2);
    CHECK_THROWS_AS(adamw_step(p, Matrix(2, 3), AdamWState::zeros_like(p), AdamWHyper{}),
                    InvalidArgument);
    AdamWHyper bad;
    bad.beta1 = 1.0;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = AdamWHyper{};
    bad.epsilon = 0.0;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = AdamWHyper{};
    bad.weight_decay = -1.0;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("seed mixing and hashing are stable") {
    CHECK(stable_hash("") == 0xcbf29ce484222325ULL);
    CHECK(stable_hash("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(mix_seed({1, 2}) != mix_seed({2, 1}));
    CHECK(mix_seed({1, 2}) == mix_seed({1, 2}));
    Rng a(42);
    Rng b(42);
    CHECK(gaussian(a) == gaussian(b));
}

TEST_CASE("cross entropy from scores") {
    Rng rng(17);
    for (int t = 0; t < 30; ++t) {
        const Vector s = random_vector(rng, 6, 2.0);
        const std::size_t target = static_cast<std::size_t>(t) % 6;
        const double tau = 0.5 + 0.05 * t;
        CHECK(softmax_cross_entropy(s, tau, target) ==
              doctest::Approx(cross_entropy(softmax(s, tau), target)).epsilon(1e-12));
    }
    // a near-certain target: log(p) would lose the tail, log1p keeps it
    const double gap = 40.0;
    const double loss = softmax_cross_entropy(Vector{gap, 0.0}, 1.0, 0);
    CHECK(loss == doctest::Approx(std::exp(-gap)).epsilon(1e-12));
    CHECK(cross_entropy(softmax(Vector{gap, 0.0}, 1.0), 0) == 0.0);
    // a hopeless target stays finite
    CHECK(softmax_cross_entropy(Vector{0.0, 2000.0}, 1.0, 0) == doctest::Approx(2000.0));
    CHECK_THROWS_AS(softmax_cross_entropy(Vector{1.0}, 1.0, 1), InvalidArgument);
    CHECK_THROWS_AS(softmax_cross_entropy(Vector{1.0}, 0.0, 0), InvalidArgument);
}
