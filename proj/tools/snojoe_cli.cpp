// snojoe: command-line driver for data generation, training, scoring,
// evaluation, the spectral-normalization ablation and the default benchmark.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "snojoe/data.hpp"
#include "snojoe/metrics.hpp"
#include "snojoe/model.hpp"
#include "snojoe/pipeline.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::json;
using namespace snojoe;

namespace {

struct GenFlags {
    SyntheticSpec spec;
    std::string ood_mode = "shift";
    int ood_samples = 500;
    double train_frac = 0.7;
    double val_frac = 0.1;
};

void add_gen_flags(CLI::App* cmd, GenFlags& g) {
    cmd->add_option("--labels", g.spec.num_labels, "Number of labels K")->check(CLI::PositiveNumber);
    cmd->add_option("--input-dim", g.spec.input_dim, "Feature dimension")->check(CLI::PositiveNumber);
    cmd->add_option("--samples", g.spec.samples, "ID samples before splitting")->check(CLI::PositiveNumber);
    cmd->add_option("--label-prob", g.spec.label_prob, "Per-label activation probability")->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--noise-sigma", g.spec.noise_sigma, "Feature noise standard deviation");
    cmd->add_option("--prototype-scale", g.spec.prototype_scale, "Prototype scale");
    cmd->add_option("--data-seed", g.spec.seed, "Generator seed");
    cmd->add_option("--ood-mode", g.ood_mode, "OOD regime")->check(CLI::IsMember({"shift", "uniform", "sparse-label"}));
    cmd->add_option("--shift-magnitude", g.spec.shift_magnitude, "Prototype displacement in shift mode");
    cmd->add_option("--ood-samples", g.ood_samples, "OOD samples")->check(CLI::PositiveNumber);
    cmd->add_option("--train-frac", g.train_frac, "Training fraction of the ID samples");
    cmd->add_option("--val-frac", g.val_frac, "Validation fraction of the ID samples");
}

SyntheticSpec resolve(const GenFlags& g) {
    SyntheticSpec s = g.spec;
    s.ood_mode = parse_ood_mode(g.ood_mode);
    s.validate();
    return s;
}

Json to_json(const GenFlags& g) {
    Json j = snojoe::to_json(resolve(g));
    j["ood_samples"] = g.ood_samples;
    j["train_frac"] = g.train_frac;
    j["val_frac"] = g.val_frac;
    return j;
}

ExperimentData generate(const GenFlags& g) {
    const SyntheticSpec spec = resolve(g);
    const SplitIndices sizes = split_by_fraction(spec.samples, g.train_frac, g.val_frac, 0);
    return make_experiment_data(spec, static_cast<int>(sizes.train.size()), static_cast<int>(sizes.val.size()),
                                static_cast<int>(sizes.test.size()), g.ood_samples, derive_seed(spec.seed, 100));
}

void add_model_flags(CLI::App* cmd, ModelConfig& m) {
    cmd->add_option("--hidden-dim", m.hidden_dim, "Residual width")->check(CLI::PositiveNumber);
    cmd->add_option("--blocks", m.num_blocks, "Residual blocks")->check(CLI::PositiveNumber);
    cmd->add_option("--sn-layers", m.sn_layers, "Leading layers with spectral normalization")->check(CLI::NonNegativeNumber);
    cmd->add_option("--lr", m.learning_rate, "Adam learning rate");
    cmd->add_option("--epochs", m.epochs, "Training epochs")->check(CLI::PositiveNumber);
    cmd->add_option("--batch-size", m.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
}

void write_json(const Json& j, const std::string& out) {
    const std::string text = j.dump(2) + "\n";
    if (out.empty() || out == "-") {
        std::cout << text;
        return;
    }
    std::ofstream f(out, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + out);
    f << text;
    if (!f) throw std::runtime_error("write failed: " + out);
}

std::vector<double> read_scores(const std::string& path) {
    const Eigen::MatrixXd m = read_matrix_csv(path);
    if (m.cols() != 1) throw std::runtime_error(path + ": expected a single score column");
    return {m.data(), m.data() + m.rows()};
}

MultiLabelDataset dataset_from(const std::string& data_dir, const std::string& features, const std::string& labels) {
    if (!data_dir.empty()) return load_csv(fs::path(data_dir) / "id_train_features.csv", fs::path(data_dir) / "id_train_labels.csv");
    if (features.empty() || labels.empty()) throw std::runtime_error("need --data-dir or both --features and --labels");
    return load_csv(features, fs::path(labels));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-label OOD detection with spectral-normalized joint energy"};
    app.set_config("--config", "", "INI/TOML file with default option values")->envname("SNOJOE_CONFIG");
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolkitVersion);

    // gen-data
    GenFlags gen;
    std::string gen_out = "data";
    auto* gen_cmd = app.add_subcommand("gen-data", "Generate synthetic ID splits and an OOD set as CSV");
    add_gen_flags(gen_cmd, gen);
    gen_cmd->add_option("--out-dir", gen_out, "Output directory");

    // train
    ModelConfig train_cfg;
    std::uint64_t train_seed = 0;
    std::string train_dir, train_features, train_labels, model_out = "model.json", log_out;
    auto* train_cmd = app.add_subcommand("train", "Train a residual multi-label classifier");
    add_model_flags(train_cmd, train_cfg);
    train_cmd->add_option("--seed", train_seed, "Model seed");
    train_cmd->add_option("--data-dir", train_dir, "gen-data directory (uses id_train_*.csv)");
    train_cmd->add_option("--features", train_features, "Training features CSV");
    train_cmd->add_option("--labels", train_labels, "Training labels CSV");
    train_cmd->add_option("--model-out", model_out, "Model file to write");
    train_cmd->add_option("--log-out", log_out, "Per-epoch loss log CSV");

    // score
    std::string score_model, score_input, score_method = "snojoe", fit_features, fit_labels, score_out = "-";
    ScoringOptions scoring;
    auto* score_cmd = app.add_subcommand("score", "Score input rows with one OOD method");
    score_cmd->add_option("--model", score_model, "Model file")->required();
    score_cmd->add_option("--input", score_input, "Features CSV to score")->required();
    std::vector<std::string> method_choices;
    for (Method m : all_methods()) method_choices.push_back(to_string(m));
    score_cmd->add_option("--method", score_method, "Score method")->check(CLI::IsMember(method_choices));
    score_cmd->add_option("--fit-features", fit_features, "Features used to fit mahalanobis/lof/iforest");
    score_cmd->add_option("--fit-labels", fit_labels, "Labels for mahalanobis fitting");
    score_cmd->add_option("--odin-temperature", scoring.odin_temperature, "ODIN temperature");
    score_cmd->add_option("--odin-epsilon", scoring.odin_epsilon, "ODIN input perturbation");
    score_cmd->add_option("--lof-k", scoring.lof_k, "LOF neighbors");
    score_cmd->add_option("--iforest-trees", scoring.iforest_trees, "Isolation forest trees");
    score_cmd->add_option("--iforest-subsample", scoring.iforest_subsample, "Isolation forest subsample");
    score_cmd->add_option("--iforest-seed", scoring.iforest_seed, "Isolation forest seed");
    score_cmd->add_option("--out", score_out, "Scores CSV ('-' for stdout)");

    // eval
    std::string id_scores, ood_scores, eval_method = "unnamed", eval_out = "-";
    double eval_tpr = 0.95;
    std::uint64_t eval_seed = 0;
    bool aupr_out = false;
    auto* eval_cmd = app.add_subcommand("eval", "FPR95 / AUROC / AUPR report from two score files");
    eval_cmd->add_option("--id-scores", id_scores, "ID scores CSV")->required();
    eval_cmd->add_option("--ood-scores", ood_scores, "OOD scores CSV")->required();
    eval_cmd->add_option("--method-name", eval_method, "Method name recorded in the report");
    eval_cmd->add_option("--tpr", eval_tpr, "ID true positive rate for the FPR column");
    eval_cmd->add_option("--seed", eval_seed, "Seed recorded in the report");
    eval_cmd->add_flag("--aupr-out", aupr_out, "Also report AUPR with OOD as the positive class");
    eval_cmd->add_option("--out", eval_out, "Report JSON ('-' for stdout)");

    // ablate
    GenFlags abl_gen;
    ModelConfig abl_cfg;
    abl_cfg.epochs = BenchConfig::defaults().model.epochs;
    std::string abl_dir, abl_out = "-";
    std::vector<int> abl_layers{0, 1, 2, 3};
    std::uint64_t abl_seed = BenchConfig::defaults().master_seed;
    auto* abl_cmd = app.add_subcommand("ablate", "Sweep the number of spectrally normalized layers");
    add_gen_flags(abl_cmd, abl_gen);
    add_model_flags(abl_cmd, abl_cfg);
    abl_cmd->add_option("--data-dir", abl_dir, "gen-data directory (otherwise generate in memory)");
    abl_cmd->add_option("--layers", abl_layers, "Comma-separated sn_layers values")->delimiter(',');
    abl_cmd->add_option("--master-seed", abl_seed, "Master seed for per-L model seeds");
    abl_cmd->add_option("--out", abl_out, "Report JSON ('-' for stdout)");

    // bench
    BenchConfig bench = BenchConfig::defaults();
    std::string bench_out = "-";
    auto* bench_cmd = app.add_subcommand("bench", "Run the default end-to-end benchmark over all nine methods");
    bench_cmd->add_option("--master-seed", bench.master_seed, "Master seed");
    bench_cmd->add_option("--epochs", bench.model.epochs, "Training epochs")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--sn-layers", bench.sn_layers, "Normalized layers of the snojoe model");
    bench_cmd->add_option("--shift-magnitude", bench.data.shift_magnitude, "OOD prototype shift");
    bench_cmd->add_option("--out", bench_out, "Report JSON ('-' for stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen_cmd) {
            const ExperimentData data = generate(gen);
            for (const auto& f : write_experiment_data(data, gen_out))
                std::cout << f.string() << "  " << file_checksum(f) << "\n";
        } else if (*train_cmd) {
            const MultiLabelDataset data = dataset_from(train_dir, train_features, train_labels);
            train_cfg.input_dim = static_cast<int>(data.input_dim());
            train_cfg.num_labels = static_cast<int>(data.num_labels());
            train_cfg.seed = train_seed;
            const TrainResult result = train(data, train_cfg);
            save_model(result.model, model_out);
            if (!log_out.empty()) {
                Eigen::MatrixXd log(static_cast<Eigen::Index>(result.epoch_loss.size()), 2);
                for (std::size_t e = 0; e < result.epoch_loss.size(); ++e)
                    log.row(static_cast<Eigen::Index>(e)) << static_cast<double>(e + 1), result.epoch_loss[e];
                write_matrix_csv(log_out, log, {"epoch", "mean_loss"});
            }
            std::cerr << "final mean training loss " << result.epoch_loss.back() << "\n";
            std::cout << model_out << "  " << file_checksum(model_out) << "\n";
        } else if (*score_cmd) {
            const ResidualClassifier model = load_model(score_model);
            const Method method = parse_method(score_method);
            std::optional<MultiLabelDataset> fit;
            if (!fit_features.empty())
                fit = load_csv(fit_features, fit_labels.empty() ? std::nullopt : std::optional<fs::path>(fit_labels));
            if (needs_fit_data(method) && !fit)
                throw std::runtime_error("method " + score_method + " needs --fit-features");
            const Scorer scorer(model, method, scoring, fit ? &*fit : nullptr);
            const MultiLabelDataset input = load_csv(score_input, std::nullopt);
            const std::vector<double> s = scorer.score(input.features);
            const Eigen::MatrixXd col = Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()));
            if (score_out == "-") {
                std::cout << "score\n";
                for (double v : s) std::cout << format_double(v) << "\n";
            } else {
                write_matrix_csv(score_out, col, {"score"});
            }
        } else if (*eval_cmd) {
            ScoreSet set{read_scores(id_scores), read_scores(ood_scores), eval_method};
            const FprAtTpr f = fpr_at_tpr(set, eval_tpr);
            DetectionReport r = evaluate(set, eval_seed);
            Json cfg{{"id_scores", id_scores}, {"ood_scores", ood_scores}, {"tpr", eval_tpr}, {"method", eval_method}};
            Json report = report_envelope("eval", cfg, eval_seed);
            Json row = snojoe::to_json(r);
            row["fpr95"] = f.fpr;
            row["tau"] = f.tau;
            if (aupr_out) row["aupr_out"] = aupr(set, false);
            report["results"] = Json::array({row});
            write_json(report, eval_out);
        } else if (*abl_cmd) {
            const ExperimentData data = abl_dir.empty() ? generate(abl_gen) : read_experiment_data(abl_dir);
            abl_cfg.input_dim = static_cast<int>(data.train.input_dim());
            abl_cfg.num_labels = static_cast<int>(data.train.num_labels());
            Json cfg{{"model", snojoe::to_json(abl_cfg)}, {"layers", abl_layers}, {"master_seed", abl_seed}};
            if (abl_dir.empty())
                cfg["data"] = to_json(abl_gen);
            else
                cfg["data_dir"] = abl_dir;
            const auto rows = run_ablation(data, abl_cfg, abl_layers, abl_seed);
            write_json(ablation_report(rows, cfg, abl_seed), abl_out);
        } else if (*bench_cmd) {
            bench.data.seed = data_seed(bench.master_seed);
            const ExperimentData data = make_experiment_data(bench.data, bench.n_train, bench.n_val, bench.n_test,
                                                             bench.n_ood, split_seed(bench.master_seed));
            write_json(run_bench(bench, data), bench_out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
