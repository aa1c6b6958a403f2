#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace snojoe {

/// Feature rows paired with multi-hot label rows. Row i of `features` and of
/// `labels` describe the same sample; label entries are exactly 0 or 1.
struct MultiLabelDataset {
    Eigen::MatrixXd features;  // samples x input_dim
    Eigen::MatrixXd labels;    // samples x K
    std::string provenance;

    Eigen::Index size() const { return features.rows(); }
    Eigen::Index input_dim() const { return features.cols(); }
    Eigen::Index num_labels() const { return labels.cols(); }

    /// Throws if shapes disagree or a label is not 0/1.
    void validate() const;
};

enum class OodMode { shift, uniform, sparse_label };

std::string to_string(OodMode mode);
OodMode parse_ood_mode(const std::string& name);

struct SyntheticSpec {
    int num_labels = 10;
    int input_dim = 32;
    int samples = 2000;
    double label_prob = 0.3;
    double noise_sigma = 0.5;
    double prototype_scale = 2.0;
    std::uint64_t seed = 7;
    OodMode ood_mode = OodMode::shift;
    double shift_magnitude = 6.0;

    void validate() const;
};

/// K x input_dim matrix of label prototypes, Gaussian times prototype_scale.
Eigen::MatrixXd generate_prototypes(const SyntheticSpec& spec);

/// Each label fires independently with label_prob (all-zero draws are redrawn);
/// features are the sum of the active prototypes plus isotropic Gaussian noise.
MultiLabelDataset generate_id(const SyntheticSpec& spec);

/// OOD samples in the regime named by spec.ood_mode:
///  - shift: the ID process with every prototype moved shift_magnitude along
///    its own random unit direction;
///  - uniform: features uniform on [-b, b]^dim, b = uniform_half_width(spec),
///    labels all zero;
///  - sparse_label: exactly one generating label, features are that single
///    prototype plus noise (strong top label, weak label sum).
MultiLabelDataset generate_ood(const SyntheticSpec& spec);

/// Two standard deviations of one ID feature coordinate.
double uniform_half_width(const SyntheticSpec& spec);

struct SplitIndices {
    std::vector<Eigen::Index> train;
    std::vector<Eigen::Index> val;
    std::vector<Eigen::Index> test;
};

/// Seeded permutation cut into train/val/test by count.
SplitIndices split_by_count(Eigen::Index n, Eigen::Index n_train, Eigen::Index n_val, std::uint64_t seed);
/// Same, with train and val sizes floor(n * fraction); test takes the rest.
SplitIndices split_by_fraction(Eigen::Index n, double train_fraction, double val_fraction, std::uint64_t seed);

MultiLabelDataset subset(const MultiLabelDataset& data, const std::vector<Eigen::Index>& rows);

/// Numeric CSV, comma separated, optional single header row (detected by a
/// non-numeric cell in the first row). Errors name the file line and column.
Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path);
void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& header = {});
/// Exact shortest round-trip decimal form of a double.
std::string format_double(double v);

MultiLabelDataset load_csv(const std::filesystem::path& features_path,
                           const std::optional<std::filesystem::path>& labels_path);
Eigen::MatrixXd load_logits_csv(const std::filesystem::path& path);
void save_csv(const MultiLabelDataset& data, const std::filesystem::path& features_path,
              const std::filesystem::path& labels_path);

/// 64-bit FNV-1a of a file's bytes, as 16 hex digits.
std::string file_checksum(const std::filesystem::path& path);

}  // namespace snojoe
