#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "snojoe/data.hpp"
#include "snojoe/linalg.hpp"

namespace snojoe {

inline constexpr int kModelFormatVersion = 1;

struct ModelConfig {
    int input_dim = 32;
    int hidden_dim = 64;
    int num_blocks = 3;
    /// Leading layers divided by their spectral norm. Layer 1 is the input
    /// projection, layers 2..num_blocks+1 are the residual blocks. Heads never.
    int sn_layers = 0;
    int num_labels = 10;
    double learning_rate = 1e-4;
    int epochs = 50;
    int batch_size = 32;
    std::uint64_t seed = 0;

    int num_layers() const { return num_blocks + 1; }
    void validate() const;
};

struct Layer {
    Eigen::MatrixXd W;  // out x in
    Eigen::VectorXd b;
};

/// All trainable tensors. Also used for gradients and optimizer moments.
struct Parameters {
    Layer input_proj;
    std::vector<Layer> blocks;
    Eigen::MatrixXd heads;  // K x hidden, row i scores label i

    Layer& layer(int index) { return index == 0 ? input_proj : blocks[static_cast<std::size_t>(index - 1)]; }
    const Layer& layer(int index) const {
        return index == 0 ? input_proj : blocks[static_cast<std::size_t>(index - 1)];
    }

    Parameters zeros_like() const;
    /// Flat views of every tensor, in a fixed order matching tensor_names().
    std::vector<Eigen::Map<Eigen::VectorXd>> tensors();
    std::vector<std::string> tensor_names() const;
};

/// Residual MLP: h_0 = P x + p, h_l = h_{l-1} + relu(W_l h_{l-1} + b_l),
/// logits = heads * h_L. Normalized layers use W / (u^T W v) with (u, v)
/// from sn_state.
struct ResidualClassifier {
    ModelConfig config;
    Parameters params;
    /// sn_state[l] tracks layer l (0-based) for l < config.sn_layers.
    std::vector<PowerIterState<double>> sn_state;

    bool is_normalized(int layer) const { return layer < config.sn_layers; }
    /// sigma used in the forward pass of a normalized layer: u^T W v.
    double layer_sigma(int layer) const;
    /// The weight actually applied in the forward pass.
    Eigen::MatrixXd effective_weight(int layer) const;
};

/// Seeded He-style initialization; sn_state vectors drawn from the same seed.
ResidualClassifier init_model(const ModelConfig& config);

struct ForwardResult {
    Eigen::VectorXd penultimate;
    Eigen::VectorXd logits;
};

ForwardResult forward(const ResidualClassifier& model, const Eigen::VectorXd& x);
/// Row-wise batch versions: X is samples x input_dim.
Eigen::MatrixXd logits_batch(const ResidualClassifier& model, const Eigen::MatrixXd& X);
Eigen::MatrixXd penultimate_batch(const ResidualClassifier& model, const Eigen::MatrixXd& X);

/// Output of residual block `block` (0-based) without the skip path, i.e.
/// relu(W h + b), applied to columns of H.
Eigen::MatrixXd block_branch(const ResidualClassifier& model, int block, const Eigen::MatrixXd& H);

/// Label-wise logistic probabilities.
Eigen::VectorXd predict_proba(const Eigen::VectorXd& logits);

/// Mean over rows of the per-label binary cross-entropy summed over labels.
/// Fills `grad` (if non-null) with the gradient w.r.t. every raw parameter,
/// holding sn_state fixed.
double loss_and_gradients(const ResidualClassifier& model, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                          Parameters* grad);

/// d(upstream . logits(x)) / dx.
Eigen::VectorXd input_vjp(const ResidualClassifier& model, const Eigen::VectorXd& x, const Eigen::VectorXd& upstream);

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct TrainResult {
    ResidualClassifier model;
    std::vector<double> epoch_loss;  // mean training loss per epoch
};

/// Mini-batch Adam on the summed-over-labels BCE. Each step first advances
/// every normalized layer's power iteration by one step, then differentiates
/// through the division by sigma. Ends with finalize().
TrainResult train(const MultiLabelDataset& data, const ModelConfig& config, const AdamOptions& adam = {});

inline constexpr int kFinalizeSteps = 500;
inline constexpr double kFinalizeTol = 1e-10;

/// Polishes every sn_state to convergence so effective weights have unit
/// spectral norm.
void finalize(ResidualClassifier& model);

std::string serialize_model(const ResidualClassifier& model);
ResidualClassifier deserialize_model(const std::string& text);
void save_model(const ResidualClassifier& model, const std::filesystem::path& path);
ResidualClassifier load_model(const std::filesystem::path& path);

}  // namespace snojoe
