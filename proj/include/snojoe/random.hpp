#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include <Eigen/Dense>

namespace snojoe {

/// SplitMix64 (Steele, Lea & Flood): a 64-bit counter-based generator.
/// The state advances by a fixed odd increment and each output is a bijective
/// mix of the counter, so a (seed, draw index) pair names one value on every
/// platform. Standard-library distributions are avoided because their output
/// is implementation-defined.
class SplitMix64 {
public:
    static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    static constexpr std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t next() {
        state_ += kGamma;
        return mix(state_);
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Lemire-style rejection keeps it unbiased.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = -n % n;
        for (;;) {
            const std::uint64_t r = next();
            const unsigned __int128 m = static_cast<unsigned __int128>(r) * n;
            if (static_cast<std::uint64_t>(m) >= limit) return static_cast<std::uint64_t>(m >> 64);
        }
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Standard normal by Box-Muller; both variates of a pair are used.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    Eigen::VectorXd normal_vector(Eigen::Index n) {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
        return v;
    }

    Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = scale * normal();
        return m;
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Independent child seed for stream `index` of a master seed: one SplitMix64
/// step from `master + (index + 1) * gamma`.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return SplitMix64::mix(master + (index + 1) * SplitMix64::kGamma);
}

}  // namespace snojoe
