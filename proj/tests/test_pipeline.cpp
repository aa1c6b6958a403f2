#include <doctest.h>

#include <filesystem>

#include "snojoe/energy.hpp"
#include "snojoe/pipeline.hpp"

using namespace snojoe;

namespace {

SyntheticSpec tiny_spec() {
    SyntheticSpec s;
    s.num_labels = 4;
    s.input_dim = 8;
    s.seed = 5;
    return s;
}

ModelConfig tiny_model() {
    ModelConfig c;
    c.input_dim = 8;
    c.hidden_dim = 12;
    c.num_blocks = 2;
    c.num_labels = 4;
    c.epochs = 3;
    c.batch_size = 16;
    return c;
}

const ExperimentData& tiny_data() {
    static const ExperimentData d = make_experiment_data(tiny_spec(), 150, 30, 60, 60, 9);
    return d;
}

}  // namespace

TEST_CASE("method names round-trip") {
    CHECK(all_methods().size() == 9);
    for (Method m : all_methods()) CHECK(parse_method(to_string(m)) == m);
    CHECK(to_string(Method::free_energy) == "free-energy");
    CHECK_THROWS_AS(parse_method("energy"), std::invalid_argument);
    CHECK(needs_fit_data(Method::lof));
    CHECK_FALSE(needs_fit_data(Method::odin));
}

TEST_CASE("experiment data shapes and seeds") {
    const auto& d = tiny_data();
    CHECK(d.train.size() == 150);
    CHECK(d.val.size() == 30);
    CHECK(d.test.size() == 60);
    CHECK(d.ood.size() == 60);
    CHECK(d.ood.input_dim() == 8);
    CHECK(data_seed(1) != split_seed(1));
    CHECK(model_seed(1, 0) != model_seed(1, 1));
    CHECK(model_seed(1, 2) == derive_seed(1, 18));

    const auto dir = std::filesystem::temp_directory_path() / "snojoe_test_pipeline_data";
    std::filesystem::remove_all(dir);
    CHECK(write_experiment_data(d, dir).size() == 8);
    const auto back = read_experiment_data(dir);
    CHECK(back.train.features == d.train.features);
    CHECK(back.ood.labels == d.ood.labels);
    std::filesystem::remove_all(dir);
}

TEST_CASE("scorer preconditions") {
    ModelConfig c = tiny_model();
    const ResidualClassifier plain = init_model(c);
    CHECK_THROWS_WITH_AS(Scorer(plain, Method::snojoe), doctest::Contains("sn_layers > 0"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(Scorer(plain, Method::mahalanobis), doctest::Contains("needs fit data"), std::invalid_argument);
    CHECK_NOTHROW(Scorer(plain, Method::jointenergy));
    c.sn_layers = 1;
    CHECK_NOTHROW(Scorer(init_model(c), Method::snojoe));
}

TEST_CASE("every method scores every row") {
    ModelConfig c = tiny_model();
    c.sn_layers = 2;
    const auto& d = tiny_data();
    const ResidualClassifier m = train(d.train, c).model;
    ScoringOptions opt;
    opt.lof_k = 10;
    opt.iforest_trees = 20;
    for (Method method : all_methods()) {
        CAPTURE(to_string(method));
        const Scorer s(m, method, opt, &d.train);
        const auto scores = s.score(d.test.features);
        CHECK(scores.size() == 60);
        for (double v : scores) CHECK(std::isfinite(v));
        if (method == Method::snojoe) {
            for (double v : scores) CHECK(v > 0.0);
        }
        if (method == Method::msp) {
            for (double v : scores) CHECK((v > 0.0 && v < 1.0));
        }
    }
    const Scorer joint(m, Method::jointenergy);
    const auto scores = joint.score(d.test.features.topRows(3));
    CHECK(scores[1] == joint_energy(forward(m, d.test.features.row(1).transpose()).logits));

    opt.odin_epsilon = 0.002;
    const auto perturbed = Scorer(m, Method::odin, opt).score(d.test.features.topRows(5));
    const auto plain = Scorer(m, Method::odin).score(d.test.features.topRows(5));
    for (int i = 0; i < 5; ++i) CHECK(perturbed[static_cast<std::size_t>(i)] >= plain[static_cast<std::size_t>(i)]);
}

TEST_CASE("ablation rows match standalone runs") {
    const auto& d = tiny_data();
    const ModelConfig c = tiny_model();
    const auto rows = run_ablation(d, c, {2, 0, 3, 1}, 77);
    REQUIRE(rows.size() == 4);
    for (int i = 0; i < 4; ++i) CHECK(rows[static_cast<std::size_t>(i)].sn_layers == i);
    const DetectionReport alone = run_joint_energy(d, c, 0, 77);
    CHECK(rows[0].report.fpr95 == alone.fpr95);
    CHECK(rows[0].report.auroc == alone.auroc);
    CHECK(rows[0].report.aupr == alone.aupr);
    CHECK(rows[0].report.tau == alone.tau);
    CHECK(rows[0].model_seed == model_seed(77, 0));
    CHECK_THROWS_AS(run_ablation(d, c, {1, 1}, 77), std::invalid_argument);

    const auto report = ablation_report(rows, to_json(c), 77);
    CHECK(report["schema"] == "snojoe-report");
    CHECK(report["command"] == "ablate");
    CHECK(report["rows"].size() == 4);
    CHECK(report["seed"] == 77);
}

TEST_CASE("bench report on a small configuration") {
    BenchConfig cfg = BenchConfig::defaults();
    cfg.data = tiny_spec();
    cfg.model = tiny_model();
    cfg.n_train = 150;
    cfg.n_val = 30;
    cfg.n_test = 60;
    cfg.n_ood = 60;
    cfg.scoring.lof_k = 10;
    cfg.scoring.iforest_trees = 20;
    const auto a = run_bench(cfg, tiny_data());
    CHECK(a["results"].size() == 9);
    CHECK(a["toolkit_version"] == kToolkitVersion);
    CHECK(a["schema_version"] == kReportSchemaVersion);
    CHECK(a["calibration"]["id_test_in_rate"].get<double>() > 0.5);
    CHECK(a.dump() == run_bench(cfg, tiny_data()).dump());
}
