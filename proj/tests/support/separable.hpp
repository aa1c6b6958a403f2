#pragma once

#include <cstdint>

#include "snojoe/data.hpp"
#include "snojoe/random.hpp"

namespace snojoe::testdata {

/// Batch size used with the separable set so that 50 epochs at the default
/// learning rate take enough optimizer steps.
inline constexpr int kSeparableBatch = 4;

/// Multi-hot labels; the first K feature coordinates are +-2 by label plus
/// small noise, the rest are noise. Each label is a half-space.
inline MultiLabelDataset separable(int n, int k, int dim, std::uint64_t seed) {
    SplitMix64 rng(seed);
    MultiLabelDataset d;
    d.features.resize(n, dim);
    d.labels.resize(n, k);
    for (int r = 0; r < n; ++r) {
        for (int i = 0; i < k; ++i) d.labels(r, i) = rng.bernoulli(0.5) ? 1.0 : 0.0;
        for (int c = 0; c < dim; ++c) {
            const double base = c < k ? (d.labels(r, c) > 0.0 ? 2.0 : -2.0) : 0.0;
            d.features(r, c) = base + 0.1 * rng.normal();
        }
    }
    d.provenance = "separable";
    return d;
}

}  // namespace snojoe::testdata
