#pragma once

#include <span>

#include <Eigen/Dense>

namespace snojoe {

// Every score in this library is oriented so that larger means more
// in-distribution.

/// log sum_i e^{f_i}, the negated multi-class free energy.
double free_energy(const Eigen::VectorXd& logits);

/// Per-label energy -ln(1 + e^f). Always strictly negative.
double label_energy(double f);

/// Label-wise joint energy: sum_i softplus(f_i) = -sum_i label_energy(f_i).
double joint_energy(const Eigen::VectorXd& logits);

struct Threshold {
    double tau;
    double target_tpr;
    int calibration_size;
};

inline constexpr int kMinCalibrationScores = 20;

/// Largest calibration score tau such that the fraction of scores strictly
/// above tau is at least target_tpr. When no score qualifies (for example all
/// scores tie) tau = min(scores) - 1, which admits every calibration score.
Threshold calibrate_tau(std::span<const double> id_scores, double target_tpr = 0.95);

enum class Decision { in, out };

/// out when score <= tau, in when score > tau.
Decision detect(double score, const Threshold& threshold);

}  // namespace snojoe
