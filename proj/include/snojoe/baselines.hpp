#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace snojoe {

// Comparison scores. Each returns larger-is-more-ID.

/// max_i sigmoid(f_i): label-wise MSP for multi-label heads.
double msp_score(const Eigen::VectorXd& logits);

double maxlogit_score(const Eigen::VectorXd& logits);

inline constexpr double kOdinTemperature = 1000.0;
inline constexpr double kOdinEpsilon = 0.0;

/// A logit function together with its input vector-Jacobian product.
/// `input_vjp(x, g)` returns d(g . logits(x)) / dx and may be empty.
struct DifferentiableLogits {
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> logits;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> input_vjp;
};

/// Temperature-scaled label-wise MSP without input perturbation.
double odin_score(const Eigen::VectorXd& logits, double temperature = kOdinTemperature);

/// ODIN. With epsilon > 0 the input first takes one signed-gradient step of
/// size epsilon that increases max_i sigmoid(f_i / T); the perturbed input is
/// then rescored. Throws if epsilon > 0 and `model.input_vjp` is empty.
double odin_score(const DifferentiableLogits& model, const Eigen::VectorXd& x, double temperature = kOdinTemperature,
                  double epsilon = kOdinEpsilon);

/// One Gaussian per label (mean over samples where the label is active) with
/// a covariance pooled over all (label, sample) pairs.
struct MahalanobisModel {
    std::vector<Eigen::VectorXd> label_means;
    Eigen::MatrixXd shared_covariance_inverse;
    double ridge_lambda = 0.0;
};

inline constexpr double kMahalanobisRidge = 1e-6;

/// Covariance gets ridge_lambda * (trace / d) * I added before inversion.
/// Every label needs at least two active samples.
MahalanobisModel mahalanobis_fit(const Eigen::MatrixXd& features, const Eigen::MatrixXd& labels,
                                 double ridge_lambda = kMahalanobisRidge);

/// -min_i (z - mu_i)^T Sigma^-1 (z - mu_i).
double mahalanobis_score(const MahalanobisModel& model, const Eigen::VectorXd& z);

/// Exact k-NN index over training points for the local outlier factor.
struct NeighborIndex {
    Eigen::MatrixXd points;  // n x d
    int k = 0;
    Eigen::VectorXd k_distance;
    Eigen::VectorXd lrd;
    /// Stand-in for zero distances: 1e-6 times the smallest positive pairwise
    /// distance, or 0 when every training point coincides.
    double zero_distance = 0.0;
};

inline constexpr int kLofNeighbors = 20;

NeighborIndex lof_fit(const Eigen::MatrixXd& features, int k = kLofNeighbors);

/// Local outlier factor of a query (its neighbors' mean local reachability
/// density over its own).
double lof(const NeighborIndex& index, const Eigen::VectorXd& z);
/// -lof(index, z).
double lof_score(const NeighborIndex& index, const Eigen::VectorXd& z);

struct IsolationTree {
    struct Node {
        int feature = -1;  // -1 marks a leaf
        double split = 0.0;
        int left = -1;
        int right = -1;
        int size = 0;
        int depth = 0;
    };
    std::vector<Node> nodes;  // nodes[0] is the root

    int height() const;
};

struct IsolationForestModel {
    std::vector<IsolationTree> trees;
    int subsample_size = 0;
    int num_trees = 0;
    std::uint64_t seed = 0;
};

inline constexpr int kForestTrees = 100;
inline constexpr int kForestSubsample = 256;

/// Average unsuccessful-search path length of a binary search tree with n
/// nodes: 0 for n <= 1, 1 for n = 2, 2 H(n-1) - 2 (n-1)/n otherwise.
double average_path_length(double n);

/// Trees are grown on subsamples drawn without replacement, to a depth limit
/// of ceil(log2(subsample)). subsample_size is clipped to the dataset size.
IsolationForestModel iforest_fit(const Eigen::MatrixXd& features, int num_trees = kForestTrees,
                                 int subsample_size = kForestSubsample, std::uint64_t seed = 0);

/// Mean over trees of the isolation depth, including the leaf-size correction.
double iforest_mean_path(const IsolationForestModel& model, const Eigen::VectorXd& z);
/// Anomaly score s(z) = 2^(-E[h(z)] / c(subsample)).
double iforest_anomaly(const IsolationForestModel& model, const Eigen::VectorXd& z);
/// -iforest_anomaly(model, z).
double iforest_score(const IsolationForestModel& model, const Eigen::VectorXd& z);

}  // namespace snojoe
