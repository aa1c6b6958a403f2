#include "snojoe/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "snojoe/random.hpp"
#include "snojoe/scalar.hpp"

namespace snojoe {

namespace {

void require_logits(const Eigen::VectorXd& logits) {
    if (logits.size() == 0) throw std::invalid_argument("empty logits");
}

// (distance, index) of the k nearest rows of `points` to z, skipping `skip`.
std::vector<std::pair<double, Eigen::Index>> nearest(const Eigen::MatrixXd& points, const Eigen::VectorXd& z, int k,
                                                     Eigen::Index skip) {
    std::vector<std::pair<double, Eigen::Index>> d;
    d.reserve(static_cast<std::size_t>(points.rows()));
    for (Eigen::Index i = 0; i < points.rows(); ++i)
        if (i != skip) d.emplace_back((points.row(i).transpose() - z).norm(), i);
    const auto kk = static_cast<std::ptrdiff_t>(k);
    std::partial_sort(d.begin(), d.begin() + kk, d.end());
    d.resize(static_cast<std::size_t>(k));
    return d;
}

double replace_zero(double d, double zero_distance) { return d > 0.0 ? d : zero_distance; }

// Local reachability density from a neighbor list.
double lrd_of(const NeighborIndex& idx, const std::vector<std::pair<double, Eigen::Index>>& nbrs) {
    double sum = 0.0;
    for (const auto& [dist, j] : nbrs) sum += std::max(idx.k_distance[j], replace_zero(dist, idx.zero_distance));
    return static_cast<double>(nbrs.size()) / sum;
}

constexpr double kEulerGamma = 0.5772156649015329;

int grow(IsolationTree& tree, const Eigen::MatrixXd& X, std::vector<Eigen::Index>& rows, std::size_t begin,
         std::size_t end, int depth, int max_depth, SplitMix64& rng) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    tree.nodes[static_cast<std::size_t>(id)].size = static_cast<int>(end - begin);
    tree.nodes[static_cast<std::size_t>(id)].depth = depth;
    if (depth >= max_depth || end - begin <= 1) return id;

    std::vector<int> candidates;
    std::vector<std::pair<double, double>> ranges;
    for (Eigen::Index f = 0; f < X.cols(); ++f) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (std::size_t r = begin; r < end; ++r) {
            lo = std::min(lo, X(rows[r], f));
            hi = std::max(hi, X(rows[r], f));
        }
        if (hi > lo) {
            candidates.push_back(static_cast<int>(f));
            ranges.emplace_back(lo, hi);
        }
    }
    if (candidates.empty()) return id;  // all points identical

    const auto pick = static_cast<std::size_t>(rng.below(candidates.size()));
    const int feature = candidates[pick];
    const auto [lo, hi] = ranges[pick];
    const double split = rng.uniform(lo, hi);
    const auto mid = std::partition(rows.begin() + static_cast<std::ptrdiff_t>(begin),
                                    rows.begin() + static_cast<std::ptrdiff_t>(end),
                                    [&](Eigen::Index r) { return X(r, feature) < split; });
    const auto m = static_cast<std::size_t>(mid - rows.begin());
    const int left = grow(tree, X, rows, begin, m, depth + 1, max_depth, rng);
    const int right = grow(tree, X, rows, m, end, depth + 1, max_depth, rng);
    auto& node = tree.nodes[static_cast<std::size_t>(id)];
    node.feature = feature;
    node.split = split;
    node.left = left;
    node.right = right;
    return id;
}

}  // namespace

double msp_score(const Eigen::VectorXd& logits) {
    require_logits(logits);
    return sigmoid(logits.maxCoeff());
}

double maxlogit_score(const Eigen::VectorXd& logits) {
    require_logits(logits);
    return logits.maxCoeff();
}

double odin_score(const Eigen::VectorXd& logits, double temperature) {
    require_logits(logits);
    if (!(temperature > 0.0)) throw std::invalid_argument("odin: temperature must be positive");
    return sigmoid(logits.maxCoeff() / temperature);
}

double odin_score(const DifferentiableLogits& model, const Eigen::VectorXd& x, double temperature, double epsilon) {
    if (!(temperature > 0.0)) throw std::invalid_argument("odin: temperature must be positive");
    if (!(epsilon >= 0.0)) throw std::invalid_argument("odin: epsilon must be nonnegative");
    if (!model.logits) throw std::invalid_argument("odin: no logit function");
    if (epsilon == 0.0) return odin_score(model.logits(x), temperature);
    if (!model.input_vjp) throw std::invalid_argument("odin: epsilon > 0 needs a differentiable scorer");

    const Eigen::VectorXd f = model.logits(x);
    require_logits(f);
    Eigen::Index top = 0;
    f.maxCoeff(&top);
    const double s = sigmoid(f[top] / temperature);
    Eigen::VectorXd upstream = Eigen::VectorXd::Zero(f.size());
    upstream[top] = s * (1.0 - s) / temperature;
    const Eigen::VectorXd g = model.input_vjp(x, upstream);
    const Eigen::VectorXd step = g.unaryExpr([](double v) { return double((v > 0.0) - (v < 0.0)); });
    return odin_score(model.logits(x + epsilon * step), temperature);
}

MahalanobisModel mahalanobis_fit(const Eigen::MatrixXd& features, const Eigen::MatrixXd& labels, double ridge_lambda) {
    if (features.rows() != labels.rows()) throw std::invalid_argument("mahalanobis_fit: row count mismatch");
    if (!(ridge_lambda > 0.0)) throw std::invalid_argument("mahalanobis_fit: ridge_lambda must be positive");
    const Eigen::Index d = features.cols();
    MahalanobisModel m;
    m.ridge_lambda = ridge_lambda;
    for (Eigen::Index i = 0; i < labels.cols(); ++i) {
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(d);
        int count = 0;
        for (Eigen::Index r = 0; r < features.rows(); ++r)
            if (labels(r, i) != 0.0) {
                sum += features.row(r).transpose();
                ++count;
            }
        if (count < 2)
            throw std::invalid_argument("mahalanobis_fit: label " + std::to_string(i + 1) +
                                        " has fewer than two active samples");
        m.label_means.push_back(sum / count);
    }
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    double pairs = 0.0;
    for (Eigen::Index i = 0; i < labels.cols(); ++i)
        for (Eigen::Index r = 0; r < features.rows(); ++r)
            if (labels(r, i) != 0.0) {
                const Eigen::VectorXd c = features.row(r).transpose() - m.label_means[static_cast<std::size_t>(i)];
                cov.noalias() += c * c.transpose();
                pairs += 1.0;
            }
    cov /= pairs;
    const double scale = cov.trace() / static_cast<double>(d);
    cov.diagonal().array() += ridge_lambda * scale;
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (!(scale > 0.0) || llt.info() != Eigen::Success) throw std::runtime_error("mahalanobis_fit: singular covariance");
    m.shared_covariance_inverse = llt.solve(Eigen::MatrixXd::Identity(d, d));
    return m;
}

double mahalanobis_score(const MahalanobisModel& model, const Eigen::VectorXd& z) {
    if (model.label_means.empty()) throw std::invalid_argument("mahalanobis_score: empty model");
    double best = std::numeric_limits<double>::infinity();
    for (const auto& mu : model.label_means) {
        const Eigen::VectorXd c = z - mu;
        best = std::min(best, c.dot(model.shared_covariance_inverse * c));
    }
    return -best;
}

NeighborIndex lof_fit(const Eigen::MatrixXd& features, int k) {
    if (k < 2) throw std::invalid_argument("lof_fit: k must be at least 2");
    if (features.rows() <= k) throw std::invalid_argument("lof_fit: need more than k points");
    NeighborIndex idx;
    idx.points = features;
    idx.k = k;
    const Eigen::Index n = features.rows();

    double min_positive = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double d = (features.row(i) - features.row(j)).norm();
            if (d > 0.0) min_positive = std::min(min_positive, d);
        }
    idx.zero_distance = std::isfinite(min_positive) ? 1e-6 * min_positive : 0.0;

    std::vector<std::vector<std::pair<double, Eigen::Index>>> nbrs(static_cast<std::size_t>(n));
    idx.k_distance.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        nbrs[static_cast<std::size_t>(i)] = nearest(features, features.row(i).transpose(), k, i);
        idx.k_distance[i] = replace_zero(nbrs[static_cast<std::size_t>(i)].back().first, idx.zero_distance);
    }
    idx.lrd.resize(n);
    if (idx.zero_distance == 0.0) {
        idx.lrd.setOnes();
        return idx;
    }
    for (Eigen::Index i = 0; i < n; ++i) idx.lrd[i] = lrd_of(idx, nbrs[static_cast<std::size_t>(i)]);
    return idx;
}

double lof(const NeighborIndex& index, const Eigen::VectorXd& z) {
    if (z.size() != index.points.cols()) throw std::invalid_argument("lof: dimension mismatch");
    const auto nbrs = nearest(index.points, z, index.k, -1);
    if (index.zero_distance == 0.0) {
        // Every training point coincides.
        const double d = nbrs.front().first;
        return d == 0.0 ? 1.0 : 1e6;
    }
    double mean_nbr_lrd = 0.0;
    for (const auto& nb : nbrs) mean_nbr_lrd += index.lrd[nb.second];
    mean_nbr_lrd /= static_cast<double>(nbrs.size());
    return mean_nbr_lrd / lrd_of(index, nbrs);
}

double lof_score(const NeighborIndex& index, const Eigen::VectorXd& z) { return -lof(index, z); }

int IsolationTree::height() const {
    int h = 0;
    for (const auto& node : nodes) h = std::max(h, node.depth);
    return h;
}

double average_path_length(double n) {
    if (n <= 1.0) return 0.0;
    if (n == 2.0) return 1.0;
    return 2.0 * (std::log(n - 1.0) + kEulerGamma) - 2.0 * (n - 1.0) / n;
}

IsolationForestModel iforest_fit(const Eigen::MatrixXd& features, int num_trees, int subsample_size, std::uint64_t seed) {
    if (features.rows() == 0) throw std::invalid_argument("iforest_fit: empty dataset");
    if (num_trees < 1 || subsample_size < 1) throw std::invalid_argument("iforest_fit: sizes must be positive");
    IsolationForestModel model;
    model.num_trees = num_trees;
    model.subsample_size = static_cast<int>(std::min<Eigen::Index>(subsample_size, features.rows()));
    model.seed = seed;
    const int max_depth = static_cast<int>(std::ceil(std::log2(static_cast<double>(model.subsample_size))));

    SplitMix64 rng(seed);
    const auto n = static_cast<std::size_t>(features.rows());
    std::vector<Eigen::Index> pool(n);
    for (int t = 0; t < num_trees; ++t) {
        std::iota(pool.begin(), pool.end(), Eigen::Index{0});
        const auto psi = static_cast<std::size_t>(model.subsample_size);
        for (std::size_t i = 0; i < psi; ++i) std::swap(pool[i], pool[i + rng.below(n - i)]);
        std::vector<Eigen::Index> rows(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(psi));
        IsolationTree tree;
        grow(tree, features, rows, 0, rows.size(), 0, max_depth, rng);
        model.trees.push_back(std::move(tree));
    }
    return model;
}

double iforest_mean_path(const IsolationForestModel& model, const Eigen::VectorXd& z) {
    if (model.trees.empty()) throw std::invalid_argument("iforest: empty model");
    double total = 0.0;
    for (const auto& tree : model.trees) {
        const IsolationTree::Node* node = &tree.nodes.front();
        while (node->feature >= 0) {
            if (node->feature >= z.size()) throw std::invalid_argument("iforest: dimension mismatch");
            node = &tree.nodes[static_cast<std::size_t>(z[node->feature] < node->split ? node->left : node->right)];
        }
        total += node->depth + average_path_length(node->size);
    }
    return total / static_cast<double>(model.trees.size());
}

double iforest_anomaly(const IsolationForestModel& model, const Eigen::VectorXd& z) {
    const double c = average_path_length(model.subsample_size);
    const double h = iforest_mean_path(model, z);
    if (c == 0.0) return 0.5;
    return std::exp2(-h / c);
}

double iforest_score(const IsolationForestModel& model, const Eigen::VectorXd& z) { return -iforest_anomaly(model, z); }

}  // namespace snojoe
