#include <doctest.h>

#include <cmath>

#include "snojoe/linalg.hpp"
#include "snojoe/random.hpp"

using namespace snojoe;

namespace {

PowerIterState<double> fresh(const Eigen::MatrixXd& W, std::uint64_t seed = 1) {
    SplitMix64 rng(seed);
    return PowerIterState<double>::random(W.rows(), W.cols(), rng);
}

double converge(const Eigen::MatrixXd& W, std::uint64_t seed = 1) {
    return power_iteration(W, fresh(W, seed), 500, 1e-10).sigma_estimate;
}

Eigen::MatrixXd random_uniform(SplitMix64& rng, Eigen::Index r, Eigen::Index c) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.uniform(-1.0, 1.0);
    return m;
}

}  // namespace

TEST_CASE("power iteration on known matrices") {
    CHECK(converge(Eigen::MatrixXd::Identity(3, 3)) == doctest::Approx(1.0).epsilon(1e-9));
    Eigen::MatrixXd d(2, 2);
    d << 3, 0, 0, 1;
    CHECK(std::abs(converge(d) - 3.0) < 1e-9);
    Eigen::MatrixXd shear(2, 2);
    shear << 1, 1, 0, 1;
    CHECK(std::abs(converge(shear) - 1.618034) < 1e-6);
}

TEST_CASE("power iteration keeps unit singular vectors") {
    SplitMix64 rng(9);
    const Eigen::MatrixXd W = random_uniform(rng, 7, 4);
    const auto s = power_iteration(W, fresh(W), 3, 1e-12);
    CHECK(std::abs(s.u.norm() - 1.0) < 1e-9);
    CHECK(std::abs(s.v.norm() - 1.0) < 1e-9);
    CHECK(s.sigma_estimate >= 0.0);
}

TEST_CASE("power iteration errors") {
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(3, 3);
    CHECK_THROWS_WITH_AS(power_iteration(zero, fresh(zero), 5, 1e-10), "degenerate weight matrix", std::domain_error);
    const Eigen::MatrixXd W = Eigen::MatrixXd::Identity(3, 3);
    auto bad = fresh(Eigen::MatrixXd::Identity(4, 3));
    CHECK_THROWS_AS(power_iteration(W, bad, 5, 1e-10), std::invalid_argument);
    CHECK_THROWS_AS(power_iteration(W, fresh(W), 0, 1e-10), std::invalid_argument);
}

TEST_CASE("warm start refines with single steps") {
    SplitMix64 rng(4);
    const Eigen::MatrixXd W = random_uniform(rng, 16, 16);
    auto s = fresh(W);
    for (int i = 0; i < 400; ++i) s = power_iteration(W, s, 1, 1e-300);
    CHECK(std::abs(s.sigma_estimate - spectral_norm_oracle(W)) < 1e-6);
}

TEST_CASE("spectral norm oracle") {
    CHECK(spectral_norm_oracle(Eigen::MatrixXd::Identity(5, 5)) == doctest::Approx(1.0).epsilon(1e-14));
    Eigen::MatrixXd d(2, 2);
    d << 3, 0, 0, 1;
    CHECK(spectral_norm_oracle(d) == doctest::Approx(3.0).epsilon(1e-14));
    Eigen::MatrixXd shear(2, 2);
    shear << 1, 1, 0, 1;
    CHECK(std::abs(spectral_norm_oracle(shear) - 1.6180339887) < 1e-10);
    // wide and tall agree
    SplitMix64 rng(3);
    const Eigen::MatrixXd W = random_uniform(rng, 5, 9);
    CHECK(spectral_norm_oracle(W) == doctest::Approx(spectral_norm_oracle(Eigen::MatrixXd(W.transpose()))).epsilon(1e-12));
    Eigen::MatrixXd bad = Eigen::MatrixXd::Identity(2, 2);
    bad(0, 1) = std::nan("");
    CHECK_THROWS_AS(spectral_norm_oracle(bad), std::invalid_argument);
}

TEST_CASE("spectral norm oracle works on float matrices") {
    Eigen::MatrixXf d(2, 2);
    d << 3, 0, 0, 1;
    CHECK(spectral_norm_oracle(d) == doctest::Approx(3.0f));
}

TEST_CASE("normalize_spectral") {
    Eigen::MatrixXd d(2, 2);
    d << 3, 0, 0, 1;
    Eigen::MatrixXd expected(2, 2);
    expected << 1, 0, 0, 1.0 / 3.0;
    CHECK(normalize_spectral(d, 3.0).isApprox(expected, 1e-15));
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(4, 4);
    CHECK(normalize_spectral(I, 1.0) == I);
    CHECK_THROWS_AS(normalize_spectral(I, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(normalize_spectral(I, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(normalize_spectral(I, std::numeric_limits<double>::infinity()), std::invalid_argument);
}

TEST_CASE("normalization, homogeneity and oracle agreement on random matrices") {
    SplitMix64 rng(2024);
    for (int trial = 0; trial < 60; ++trial) {
        const auto r = static_cast<Eigen::Index>(1 + rng.below(32));
        const auto c = static_cast<Eigen::Index>(1 + rng.below(32));
        const Eigen::MatrixXd W = random_uniform(rng, r, c);
        const double sigma = spectral_norm_oracle(W);
        CHECK(std::abs(spectral_norm_oracle(normalize_spectral(W, sigma)) - 1.0) < 1e-9);
        const double scale = rng.uniform(-5.0, 5.0);
        CHECK(std::abs(spectral_norm_oracle(Eigen::MatrixXd(scale * W)) - std::abs(scale) * sigma) < 1e-9);
        CHECK(std::abs(converge(W, trial) - sigma) < 1e-6);
    }
}

TEST_CASE("lipschitz bounds") {
    auto b = lipschitz_bounds(0.5, 3);
    CHECK(b.lower == doctest::Approx(0.25));
    CHECK(b.upper == doctest::Approx(2.25));
    b = lipschitz_bounds(1.0, 4);
    CHECK(b.lower == 0.0);
    CHECK(b.upper == doctest::Approx(8.0));
    for (double a : {0.1, 0.7, 1.0}) {
        b = lipschitz_bounds(a, 1);
        CHECK(b.lower == 1.0);
        CHECK(b.upper == 1.0);
    }
    CHECK_THROWS_AS(lipschitz_bounds(0.0, 3), std::invalid_argument);
    CHECK_THROWS_AS(lipschitz_bounds(1.5, 3), std::invalid_argument);
    CHECK_THROWS_AS(lipschitz_bounds(0.5, 0), std::invalid_argument);
}

TEST_CASE("lipschitz bounds are monotone in alpha") {
    for (int L = 2; L <= 6; ++L) {
        auto prev = lipschitz_bounds(0.01, L);
        for (double a = 0.02; a <= 1.0; a += 0.01) {
            const auto cur = lipschitz_bounds(a, L);
            CHECK(cur.lower < prev.lower);
            CHECK(cur.upper > prev.upper);
            CHECK(cur.lower <= 1.0);
            CHECK(cur.upper >= 1.0);
            prev = cur;
        }
    }
}
