#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "snojoe/data.hpp"
#include "snojoe/metrics.hpp"
#include "snojoe/random.hpp"
#include "support/oracles.hpp"
#include "support/separable.hpp"

using namespace snojoe;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path workdir() {
    static const fs::path dir = [] {
        const auto d = fs::temp_directory_path() / "snojoe_test_cli";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

Run cli(const std::string& args) {
    const fs::path out = workdir() / "stdout.txt";
    const fs::path err = workdir() / "stderr.txt";
    const std::string cmd = std::string("'") + SNOJOE_CLI + "' " + args + " > '" + out.string() + "' 2> '" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

void write_scores(const fs::path& p, const std::vector<double>& v) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
    for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
    write_matrix_csv(p, m, {"score"});
}

const fs::path& separable_files() {
    static const fs::path dir = [] {
        const fs::path d = workdir() / "separable";
        fs::create_directories(d);
        save_csv(testdata::separable(200, 3, 6, 11), d / "f.csv", d / "l.csv");
        return d;
    }();
    return dir;
}

}  // namespace

TEST_CASE("version and usage") {
    const Run v = cli("--version");
    CHECK(v.code == 0);
    CHECK(v.out.find("0.1.0") != std::string::npos);
    CHECK(cli("").code != 0);
    CHECK(cli("frobnicate").code != 0);
}

TEST_CASE("gen-data is deterministic and validates flags") {
    const fs::path a = workdir() / "gen_a";
    const fs::path b = workdir() / "gen_b";
    const std::string flags = " --samples 300 --ood-samples 50 --input-dim 8 --labels 4";
    const Run ra = cli("gen-data" + flags + " --out-dir " + q(a));
    const Run rb = cli("gen-data" + flags + " --out-dir " + q(b));
    REQUIRE(ra.code == 0);
    REQUIRE(rb.code == 0);
    for (const char* f : {"id_train_features.csv", "id_val_labels.csv", "id_test_features.csv", "ood_features.csv"}) {
        CHECK(file_checksum(a / f) == file_checksum(b / f));
        CHECK(ra.out.find(file_checksum(a / f)) != std::string::npos);
    }
    CHECK(read_matrix_csv(a / "id_train_features.csv").rows() == 210);
    CHECK(read_matrix_csv(a / "ood_features.csv").rows() == 50);

    const Run other = cli("gen-data" + flags + " --data-seed 8 --out-dir " + q(workdir() / "gen_c"));
    CHECK(file_checksum(workdir() / "gen_c" / "id_train_features.csv") != file_checksum(a / "id_train_features.csv"));
    CHECK(other.code == 0);

    const Run bad = cli("gen-data --label-prob 1.5 --out-dir " + q(workdir() / "gen_bad"));
    CHECK(bad.code != 0);
    CHECK_FALSE(fs::exists(workdir() / "gen_bad"));
    CHECK(cli("gen-data --ood-mode gaussian --out-dir " + q(workdir() / "gen_bad")).code != 0);
}

TEST_CASE("train writes models and a loss log") {
    const fs::path& d = separable_files();
    const std::string data = " --features " + q(d / "f.csv") + " --labels " + q(d / "l.csv");
    const Run plain = cli("train" + data + " --hidden-dim 16 --blocks 2 --epochs 50 --batch-size " +
                          std::to_string(testdata::kSeparableBatch) + " --seed 3 --sn-layers 0 --model-out " +
                          q(workdir() / "m0.json") + " --log-out " + q(workdir() / "log0.csv"));
    REQUIRE(plain.code == 0);
    const Eigen::MatrixXd log = read_matrix_csv(workdir() / "log0.csv");
    REQUIRE(log.rows() == 50);
    CHECK(log(49, 1) < 0.1);
    for (Eigen::Index e = 5; e < log.rows(); ++e) CHECK(log(e, 1) <= log(e - 1, 1));

    const Run sn = cli("train" + data + " --hidden-dim 16 --blocks 2 --epochs 5 --seed 3 --sn-layers 3 --model-out " +
                       q(workdir() / "m3.json"));
    REQUIRE(sn.code == 0);
    CHECK(slurp(workdir() / "m0.json") != slurp(workdir() / "m3.json"));

    const Run missing = cli("train --features " + q(workdir() / "nope.csv") + " --labels " + q(d / "l.csv") +
                            " --model-out " + q(workdir() / "never.json"));
    CHECK(missing.code != 0);
    CHECK(missing.err.find("nope.csv") != std::string::npos);
    CHECK_FALSE(fs::exists(workdir() / "never.json"));
}

TEST_CASE("score emits one row per input") {
    const fs::path& d = separable_files();
    const std::string data = " --features " + q(d / "f.csv") + " --labels " + q(d / "l.csv");
    REQUIRE(cli("train" + data + " --hidden-dim 8 --blocks 2 --epochs 3 --sn-layers 2 --model-out " +
                q(workdir() / "sm.json"))
                .code == 0);
    const std::string base = "score --model " + q(workdir() / "sm.json") + " --input " + q(d / "f.csv");

    const Run msp = cli(base + " --method msp --out " + q(workdir() / "msp.csv"));
    REQUIRE(msp.code == 0);
    const Eigen::MatrixXd s = read_matrix_csv(workdir() / "msp.csv");
    CHECK(s.rows() == 200);
    CHECK(s.minCoeff() > 0.0);
    CHECK(s.maxCoeff() < 1.0);

    const Run joint = cli(base + " --method snojoe --out -");
    REQUIRE(joint.code == 0);
    std::istringstream lines(joint.out);
    std::string line;
    std::getline(lines, line);
    CHECK(line == "score");
    int rows = 0;
    while (std::getline(lines, line)) {
        CHECK(std::stod(line) > 0.0);
        ++rows;
    }
    CHECK(rows == 200);

    const Run lof = cli(base + " --method lof --lof-k 5 --fit-features " + q(d / "f.csv") + " --out " +
                        q(workdir() / "lof.csv"));
    CHECK(lof.code == 0);
    CHECK(read_matrix_csv(workdir() / "lof.csv").rows() == 200);

    const Run nofit = cli(base + " --method mahalanobis");
    CHECK(nofit.code != 0);
    CHECK(nofit.err.find("fit") != std::string::npos);
    CHECK(cli(base + " --method energy").code != 0);
}

TEST_CASE("eval reports and agrees with the oracle") {
    write_scores(workdir() / "id.csv", {3, 4, 5, 6});
    write_scores(workdir() / "ood.csv", {0, 1, 2});
    const Run r = cli("eval --id-scores " + q(workdir() / "id.csv") + " --ood-scores " + q(workdir() / "ood.csv") +
                      " --method-name perfect --seed 4 --aupr-out");
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["schema"] == "snojoe-report");
    CHECK(j["command"] == "eval");
    CHECK(j["seed"] == 4);
    const auto& row = j["results"][0];
    CHECK(row["fpr95"] == 0.0);
    CHECK(row["auroc"] == 1.0);
    CHECK(row["aupr"] == 1.0);
    CHECK(row["aupr_out"] == 1.0);
    CHECK(row["method"] == "perfect");

    SplitMix64 rng(12);
    std::vector<double> id, ood;
    for (int i = 0; i < 300; ++i) id.push_back(std::round(4.0 * rng.normal() + 1.0));
    for (int i = 0; i < 200; ++i) ood.push_back(std::round(4.0 * rng.normal()));
    write_scores(workdir() / "id2.csv", id);
    write_scores(workdir() / "ood2.csv", ood);
    const Run r2 = cli("eval --id-scores " + q(workdir() / "id2.csv") + " --ood-scores " + q(workdir() / "ood2.csv") +
                       " --out " + q(workdir() / "eval2.json"));
    REQUIRE(r2.code == 0);
    const auto row2 = nlohmann::json::parse(slurp(workdir() / "eval2.json"))["results"][0];
    const auto o = oracle::metrics(id, ood);
    CHECK(std::abs(row2["fpr95"].get<double>() - o.fpr95) < 1e-12);
    CHECK(std::abs(row2["auroc"].get<double>() - o.auroc) < 1e-12);
    CHECK(std::abs(row2["aupr"].get<double>() - o.aupr) < 1e-12);
}

TEST_CASE("eval failures write nothing to stdout") {
    write_scores(workdir() / "ok.csv", {1, 2, 3});
    {
        std::ofstream bad(workdir() / "bad.csv");
        bad << "score\n1\nx\n";
    }
    const Run a = cli("eval --id-scores " + q(workdir() / "ok.csv") + " --ood-scores " + q(workdir() / "bad.csv"));
    CHECK(a.code != 0);
    CHECK(a.out.empty());
    CHECK(a.err.find("row 3") != std::string::npos);
    const Run b = cli("eval --id-scores " + q(workdir() / "absent.csv") + " --ood-scores " + q(workdir() / "ok.csv"));
    CHECK(b.code != 0);
    CHECK(b.out.empty());
    CHECK(b.err.find("absent.csv") != std::string::npos);
}

TEST_CASE("ablate over a generated directory") {
    const fs::path dir = workdir() / "abl_data";
    REQUIRE(cli("gen-data --samples 300 --ood-samples 60 --input-dim 8 --labels 4 --out-dir " + q(dir)).code == 0);
    const Run r = cli("ablate --data-dir " + q(dir) + " --hidden-dim 8 --blocks 2 --epochs 2 --layers 2,0,1");
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["command"] == "ablate");
    REQUIRE(j["rows"].size() == 3);
    CHECK(j["rows"][0]["sn_layers"] == 0);
    CHECK(cli("ablate --data-dir " + q(dir) + " --epochs 1 --layers 1,1").code != 0);
}

TEST_CASE("config file supplies option defaults") {
    const fs::path ini = workdir() / "eval.ini";
    {
        std::ofstream out(ini);
        out << "[eval]\nmethod-name=fromfile\n";
    }
    write_scores(workdir() / "c_id.csv", {2, 3});
    write_scores(workdir() / "c_ood.csv", {1});
    const Run r = cli("--config " + q(ini) + " eval --id-scores " + q(workdir() / "c_id.csv") + " --ood-scores " +
                      q(workdir() / "c_ood.csv"));
    REQUIRE(r.code == 0);
    CHECK(nlohmann::json::parse(r.out)["results"][0]["method"] == "fromfile");
}
