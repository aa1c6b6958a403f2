#include "snojoe/energy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "snojoe/scalar.hpp"

namespace snojoe {

double free_energy(const Eigen::VectorXd& logits) {
    if (logits.size() == 0) throw std::invalid_argument("free_energy: empty logits");
    const double m = logits.maxCoeff();
    return m + std::log((logits.array() - m).exp().sum());
}

double label_energy(double f) { return -softplus(f); }

double joint_energy(const Eigen::VectorXd& logits) {
    if (logits.size() == 0) throw std::invalid_argument("joint_energy: empty logits");
    double total = 0.0;
    for (Eigen::Index i = 0; i < logits.size(); ++i) total += softplus(logits[i]);
    return total;
}

Threshold calibrate_tau(std::span<const double> id_scores, double target_tpr) {
    if (!(target_tpr > 0.0 && target_tpr < 1.0)) throw std::invalid_argument("calibrate_tau: target_tpr must lie in (0, 1)");
    if (id_scores.size() < static_cast<std::size_t>(kMinCalibrationScores))
        throw std::invalid_argument("calibrate_tau: need at least " + std::to_string(kMinCalibrationScores) +
                                    " ID scores, got " + std::to_string(id_scores.size()));
    std::vector<double> sorted(id_scores.begin(), id_scores.end());
    for (double s : sorted)
        if (!std::isfinite(s)) throw std::invalid_argument("calibrate_tau: non-finite score");
    std::sort(sorted.begin(), sorted.end());
    const auto n = sorted.size();
    const int size = static_cast<int>(n);

    // Walk tie groups from the top; `above` counts scores strictly greater than
    // the current group's value.
    std::size_t end = n;
    while (end > 0) {
        const double value = sorted[end - 1];
        const std::size_t above = n - end;
        if (static_cast<double>(above) / static_cast<double>(n) >= target_tpr) return {value, target_tpr, size};
        while (end > 0 && sorted[end - 1] == value) --end;
    }
    return {sorted.front() - 1.0, target_tpr, size};
}

Decision detect(double score, const Threshold& threshold) { return score > threshold.tau ? Decision::in : Decision::out; }

}  // namespace snojoe
