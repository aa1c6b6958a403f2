#pragma once

#include <cmath>

namespace snojoe {

/// e^f / (1 + e^f) without overflow on either tail.
inline double sigmoid(double f) {
    if (f >= 0.0) return 1.0 / (1.0 + std::exp(-f));
    const double e = std::exp(f);
    return e / (1.0 + e);
}

/// ln(1 + e^f); for f > 0 evaluated as f + ln(1 + e^-f).
inline double softplus(double f) {
    if (f > 0.0) return f + std::log1p(std::exp(-f));
    return std::log1p(std::exp(f));
}

}  // namespace snojoe
