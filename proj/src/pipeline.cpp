#include "snojoe/pipeline.hpp"

#include <algorithm>
#include <stdexcept>

#include "snojoe/energy.hpp"
#include "snojoe/random.hpp"

namespace snojoe {

namespace {

using Json = nlohmann::json;

std::vector<double> column(const Eigen::MatrixXd& m, auto&& fn) {
    std::vector<double> out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) out[static_cast<std::size_t>(r)] = fn(Eigen::VectorXd(m.row(r).transpose()));
    return out;
}

ModelConfig with_layers(ModelConfig base, int sn_layers, std::uint64_t master_seed, const MultiLabelDataset& train) {
    base.input_dim = static_cast<int>(train.input_dim());
    base.num_labels = static_cast<int>(train.num_labels());
    base.sn_layers = sn_layers;
    base.seed = model_seed(master_seed, sn_layers);
    return base;
}

}  // namespace

const std::vector<Method>& all_methods() {
    static const std::vector<Method> methods{Method::snojoe,  Method::jointenergy, Method::free_energy,
                                             Method::msp,     Method::maxlogit,    Method::odin,
                                             Method::mahalanobis, Method::lof,     Method::iforest};
    return methods;
}

std::string to_string(Method method) {
    switch (method) {
        case Method::snojoe: return "snojoe";
        case Method::jointenergy: return "jointenergy";
        case Method::free_energy: return "free-energy";
        case Method::msp: return "msp";
        case Method::maxlogit: return "maxlogit";
        case Method::odin: return "odin";
        case Method::mahalanobis: return "mahalanobis";
        case Method::lof: return "lof";
        case Method::iforest: return "iforest";
    }
    return "snojoe";
}

Method parse_method(const std::string& name) {
    for (Method m : all_methods())
        if (to_string(m) == name) return m;
    throw std::invalid_argument("unknown method '" + name + "'");
}

bool needs_fit_data(Method method) {
    return method == Method::mahalanobis || method == Method::lof || method == Method::iforest;
}

Scorer::Scorer(const ResidualClassifier& model, Method method, const ScoringOptions& options,
               const MultiLabelDataset* fit_data)
    : model_(&model), method_(method), options_(options) {
    if (method == Method::snojoe && model.config.sn_layers == 0)
        throw std::invalid_argument("method snojoe expects a model trained with sn_layers > 0; use jointenergy");
    if (!needs_fit_data(method)) return;
    if (fit_data == nullptr) throw std::invalid_argument("method " + to_string(method) + " needs fit data");
    const Eigen::MatrixXd z = penultimate_batch(model, fit_data->features);
    switch (method) {
        case Method::mahalanobis:
            if (fit_data->num_labels() != model.config.num_labels)
                throw std::invalid_argument("mahalanobis fit data needs labels matching the model");
            mahalanobis_ = mahalanobis_fit(z, fit_data->labels, options.mahalanobis_ridge);
            break;
        case Method::lof: neighbors_ = lof_fit(z, options.lof_k); break;
        case Method::iforest:
            forest_ = iforest_fit(z, options.iforest_trees, options.iforest_subsample, options.iforest_seed);
            break;
        default: break;
    }
}

std::vector<double> Scorer::score(const Eigen::MatrixXd& X) const {
    const ResidualClassifier& model = *model_;
    switch (method_) {
        case Method::snojoe:
        case Method::jointenergy: return column(logits_batch(model, X), [](const auto& f) { return joint_energy(f); });
        case Method::free_energy: return column(logits_batch(model, X), [](const auto& f) { return free_energy(f); });
        case Method::msp: return column(logits_batch(model, X), [](const auto& f) { return msp_score(f); });
        case Method::maxlogit: return column(logits_batch(model, X), [](const auto& f) { return maxlogit_score(f); });
        case Method::odin: {
            const double T = options_.odin_temperature;
            if (options_.odin_epsilon == 0.0)
                return column(logits_batch(model, X), [T](const auto& f) { return odin_score(f, T); });
            DifferentiableLogits net{
                [&model](const Eigen::VectorXd& x) { return forward(model, x).logits; },
                [&model](const Eigen::VectorXd& x, const Eigen::VectorXd& g) { return input_vjp(model, x, g); }};
            const double eps = options_.odin_epsilon;
            return column(X, [&](const auto& x) { return odin_score(net, x, T, eps); });
        }
        case Method::mahalanobis:
            return column(penultimate_batch(model, X), [this](const auto& z) { return mahalanobis_score(*mahalanobis_, z); });
        case Method::lof:
            return column(penultimate_batch(model, X), [this](const auto& z) { return lof_score(*neighbors_, z); });
        case Method::iforest:
            return column(penultimate_batch(model, X), [this](const auto& z) { return iforest_score(*forest_, z); });
    }
    throw std::logic_error("unhandled method");
}

ExperimentData make_experiment_data(SyntheticSpec spec, int n_train, int n_val, int n_test, int n_ood,
                                    std::uint64_t split_seed) {
    if (n_train < 1 || n_val < 0 || n_test < 1 || n_ood < 1) throw std::invalid_argument("split sizes must be positive");
    spec.samples = n_train + n_val + n_test;
    const MultiLabelDataset id = generate_id(spec);
    const SplitIndices split = split_by_count(id.size(), n_train, n_val, split_seed);
    ExperimentData data{subset(id, split.train), subset(id, split.val), subset(id, split.test), {}};
    spec.samples = n_ood;
    data.ood = generate_ood(spec);
    return data;
}

std::vector<std::filesystem::path> write_experiment_data(const ExperimentData& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> files;
    auto put = [&](const MultiLabelDataset& d, const std::string& stem) {
        const auto f = dir / (stem + "_features.csv");
        const auto l = dir / (stem + "_labels.csv");
        save_csv(d, f, l);
        files.push_back(f);
        files.push_back(l);
    };
    put(data.train, "id_train");
    put(data.val, "id_val");
    put(data.test, "id_test");
    put(data.ood, "ood");
    return files;
}

ExperimentData read_experiment_data(const std::filesystem::path& dir) {
    auto get = [&](const std::string& stem) {
        return load_csv(dir / (stem + "_features.csv"), dir / (stem + "_labels.csv"));
    };
    return {get("id_train"), get("id_val"), get("id_test"), get("ood")};
}

std::uint64_t data_seed(std::uint64_t master) { return derive_seed(master, 0); }
std::uint64_t split_seed(std::uint64_t master) { return derive_seed(master, 1); }
std::uint64_t model_seed(std::uint64_t master, int sn_layers) {
    return derive_seed(master, 16 + static_cast<std::uint64_t>(sn_layers));
}

BenchConfig BenchConfig::defaults() {
    BenchConfig c;
    c.data.num_labels = 10;
    c.data.input_dim = 32;
    c.data.ood_mode = OodMode::shift;
    c.model.input_dim = 32;
    c.model.num_labels = 10;
    c.model.hidden_dim = 64;
    c.model.num_blocks = 3;
    c.model.epochs = 60;
    c.model.batch_size = 32;
    c.model.learning_rate = 1e-4;
    c.data.seed = data_seed(c.master_seed);
    return c;
}

Json to_json(const ModelConfig& c) {
    return {{"input_dim", c.input_dim},   {"hidden_dim", c.hidden_dim},   {"num_blocks", c.num_blocks},
            {"sn_layers", c.sn_layers},   {"num_labels", c.num_labels},   {"learning_rate", c.learning_rate},
            {"epochs", c.epochs},         {"batch_size", c.batch_size},   {"seed", c.seed}};
}

Json to_json(const SyntheticSpec& s) {
    return {{"num_labels", s.num_labels},           {"input_dim", s.input_dim},
            {"samples", s.samples},                 {"label_prob", s.label_prob},
            {"noise_sigma", s.noise_sigma},         {"prototype_scale", s.prototype_scale},
            {"seed", s.seed},                       {"ood_mode", to_string(s.ood_mode)},
            {"shift_magnitude", s.shift_magnitude}};
}

Json to_json(const BenchConfig& c) {
    return {{"data", to_json(c.data)},
            {"n_train", c.n_train},
            {"n_val", c.n_val},
            {"n_test", c.n_test},
            {"n_ood", c.n_ood},
            {"model", to_json(c.model)},
            {"sn_layers", c.sn_layers},
            {"scoring",
             {{"odin_temperature", c.scoring.odin_temperature},
              {"odin_epsilon", c.scoring.odin_epsilon},
              {"mahalanobis_ridge", c.scoring.mahalanobis_ridge},
              {"lof_k", c.scoring.lof_k},
              {"iforest_trees", c.scoring.iforest_trees},
              {"iforest_subsample", c.scoring.iforest_subsample},
              {"iforest_seed", c.scoring.iforest_seed}}},
            {"master_seed", c.master_seed}};
}

Json to_json(const DetectionReport& r) {
    return {{"method", r.method_name},
            {"fpr95", r.fpr95},
            {"auroc", r.auroc},
            {"aupr", r.aupr},
            {"tau", r.tau},
            {"counts", {{"num_id", r.num_id}, {"num_ood", r.num_ood}}},
            {"seed", r.seed}};
}

Json report_envelope(const std::string& command, const Json& config, std::uint64_t seed) {
    return {{"schema", "snojoe-report"},
            {"schema_version", kReportSchemaVersion},
            {"toolkit_version", kToolkitVersion},
            {"command", command},
            {"config", config},
            {"seed", seed}};
}

DetectionReport run_joint_energy(const ExperimentData& data, const ModelConfig& base, int sn_layers,
                                 std::uint64_t master_seed) {
    const ModelConfig config = with_layers(base, sn_layers, master_seed, data.train);
    const TrainResult trained = train(data.train, config);
    const Scorer scorer(trained.model, Method::jointenergy);
    ScoreSet set{scorer.score(data.test.features), scorer.score(data.ood.features), "jointenergy"};
    return evaluate(set, config.seed);
}

Json run_bench(const BenchConfig& config, const ExperimentData& data) {
    const ModelConfig sn_config = with_layers(config.model, config.sn_layers, config.master_seed, data.train);
    const ModelConfig plain_config = with_layers(config.model, 0, config.master_seed, data.train);
    const TrainResult sn_model = train(data.train, sn_config);
    const TrainResult plain_model = train(data.train, plain_config);

    Json results = Json::array();
    Json calibration;
    for (Method method : all_methods()) {
        const bool sn = method == Method::snojoe;
        const ResidualClassifier& model = sn ? sn_model.model : plain_model.model;
        const Scorer scorer(model, method, config.scoring, &data.train);
        ScoreSet set{scorer.score(data.test.features), scorer.score(data.ood.features), to_string(method)};
        results.push_back(to_json(evaluate(set, model.config.seed)));
        if (sn) {
            const std::vector<double> val = scorer.score(data.val.features);
            const Threshold th = calibrate_tau(val, 0.95);
            auto in_rate = [&th](const std::vector<double>& s) {
                std::size_t in = 0;
                for (double v : s) in += detect(v, th) == Decision::in ? 1 : 0;
                return static_cast<double>(in) / static_cast<double>(s.size());
            };
            calibration = {{"method", to_string(method)},
                           {"tau", th.tau},
                           {"target_tpr", th.target_tpr},
                           {"calibration_size", th.calibration_size},
                           {"id_test_in_rate", in_rate(set.id_scores)},
                           {"ood_in_rate", in_rate(set.ood_scores)}};
        }
    }
    Json report = report_envelope("bench", to_json(config), config.master_seed);
    report["results"] = std::move(results);
    report["calibration"] = std::move(calibration);
    report["final_train_loss"] = {{"snojoe", sn_model.epoch_loss.back()}, {"plain", plain_model.epoch_loss.back()}};
    return report;
}

std::vector<AblationRow> run_ablation(const ExperimentData& data, const ModelConfig& base,
                                      const std::vector<int>& layers, std::uint64_t master_seed) {
    std::vector<int> sorted = layers;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw std::invalid_argument("ablation layer list contains duplicates");
    std::vector<AblationRow> rows;
    for (int L : sorted) rows.push_back({L, run_joint_energy(data, base, L, master_seed), model_seed(master_seed, L)});
    return rows;
}

Json ablation_report(const std::vector<AblationRow>& rows, const Json& config, std::uint64_t master_seed) {
    Json report = report_envelope("ablate", config, master_seed);
    Json out = Json::array();
    for (const auto& row : rows)
        out.push_back({{"sn_layers", row.sn_layers},
                       {"fpr95", row.report.fpr95},
                       {"auroc", row.report.auroc},
                       {"aupr", row.report.aupr},
                       {"tau", row.report.tau},
                       {"model_seed", row.model_seed}});
    report["rows"] = std::move(out);
    return report;
}

}  // namespace snojoe
