#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "snojoe/baselines.hpp"
#include "snojoe/data.hpp"
#include "snojoe/metrics.hpp"
#include "snojoe/model.hpp"

namespace snojoe {

inline constexpr const char* kToolkitVersion = "0.1.0";
inline constexpr int kReportSchemaVersion = 1;

enum class Method { snojoe, jointenergy, free_energy, msp, maxlogit, odin, mahalanobis, lof, iforest };

const std::vector<Method>& all_methods();
std::string to_string(Method method);
Method parse_method(const std::string& name);
/// mahalanobis, lof and iforest are fitted on training penultimate features.
bool needs_fit_data(Method method);

struct ScoringOptions {
    double odin_temperature = kOdinTemperature;
    double odin_epsilon = kOdinEpsilon;
    double mahalanobis_ridge = kMahalanobisRidge;
    int lof_k = kLofNeighbors;
    int iforest_trees = kForestTrees;
    int iforest_subsample = kForestSubsample;
    std::uint64_t iforest_seed = 0;
};

/// One OOD score method bound to a trained model and, where needed, to
/// auxiliaries fitted on `fit_data`. Fitted state is immutable after
/// construction.
class Scorer {
public:
    Scorer(const ResidualClassifier& model, Method method, const ScoringOptions& options = {},
           const MultiLabelDataset* fit_data = nullptr);

    Method method() const { return method_; }
    /// One score per row of X (samples x input_dim), larger is more ID.
    std::vector<double> score(const Eigen::MatrixXd& X) const;

private:
    const ResidualClassifier* model_;
    Method method_;
    ScoringOptions options_;
    std::optional<MahalanobisModel> mahalanobis_;
    std::optional<NeighborIndex> neighbors_;
    std::optional<IsolationForestModel> forest_;
};

/// ID splits plus an OOD set.
struct ExperimentData {
    MultiLabelDataset train;
    MultiLabelDataset val;
    MultiLabelDataset test;
    MultiLabelDataset ood;
};

/// Generates ID data with `spec` (spec.samples is overridden to the split
/// total), splits it with `split_seed`, and draws `n_ood` OOD samples.
ExperimentData make_experiment_data(SyntheticSpec spec, int n_train, int n_val, int n_test, int n_ood,
                                    std::uint64_t split_seed);

/// gen-data directory layout: id_{train,val,test}_{features,labels}.csv and
/// ood_{features,labels}.csv.
std::vector<std::filesystem::path> write_experiment_data(const ExperimentData& data, const std::filesystem::path& dir);
ExperimentData read_experiment_data(const std::filesystem::path& dir);

/// Seeds derived from one master seed. Stream 0 feeds the data generator,
/// stream 1 the split permutation, stream 16 + L the model trained with
/// L normalized layers.
std::uint64_t data_seed(std::uint64_t master);
std::uint64_t split_seed(std::uint64_t master);
std::uint64_t model_seed(std::uint64_t master, int sn_layers);

struct BenchConfig {
    SyntheticSpec data;
    int n_train = 2000;
    int n_val = 250;
    int n_test = 500;
    int n_ood = 500;
    ModelConfig model;
    /// Normalized layers of the model behind the snojoe row.
    int sn_layers = 2;
    ScoringOptions scoring;
    std::uint64_t master_seed = 2024;

    /// The documented default benchmark.
    static BenchConfig defaults();
};

nlohmann::json to_json(const BenchConfig& config);
nlohmann::json to_json(const ModelConfig& config);
nlohmann::json to_json(const SyntheticSpec& spec);
nlohmann::json to_json(const DetectionReport& report);

/// Trains with sn_layers = L and seed model_seed(master, L), scores ID test
/// and OOD with joint energy, evaluates.
DetectionReport run_joint_energy(const ExperimentData& data, const ModelConfig& base, int sn_layers,
                                 std::uint64_t master_seed);

/// Full comparison: an SN model (config.sn_layers) feeds snojoe; a plain
/// model (L = 0) feeds jointenergy and every baseline.
nlohmann::json run_bench(const BenchConfig& config, const ExperimentData& data);

struct AblationRow {
    int sn_layers;
    DetectionReport report;
    std::uint64_t model_seed;
};

std::vector<AblationRow> run_ablation(const ExperimentData& data, const ModelConfig& base,
                                      const std::vector<int>& layers, std::uint64_t master_seed);

/// Common report envelope: schema name/version, toolkit version, command,
/// resolved config and seed.
nlohmann::json report_envelope(const std::string& command, const nlohmann::json& config, std::uint64_t seed);
nlohmann::json ablation_report(const std::vector<AblationRow>& rows, const nlohmann::json& config,
                               std::uint64_t master_seed);

}  // namespace snojoe
