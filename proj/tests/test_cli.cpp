#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "cli.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
    int code;
    std::string out, err;
};

Outcome run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = mtlfsl::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("mtlfsl_cli_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

std::map<std::string, std::string> directory_contents(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) out[e.path().filename().string()] = slurp(e.path());
    return out;
}

std::vector<std::vector<std::string>> read_rows(const fs::path& p) {
    std::istringstream in(slurp(p));
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string c;
        while (std::getline(ls, c, ',')) cells.push_back(c);
        rows.push_back(cells);
    }
    return rows;
}

void synth(const TempDir& dir, const std::string& name, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{"synth", "--out-dir", dir / name, "--features", "8", "--tasks", "3",
                                  "--patients", "60", "--retention", "1,0.8,0.6", "--seed", "4"};
    args.insert(args.end(), extra.begin(), extra.end());
    const auto r = run(args);
    INFO(r.err);
    REQUIRE(r.code == 0);
}

struct EpochGuard {
    EpochGuard() { setenv("SOURCE_DATE_EPOCH", "1700000000", 1); }
    ~EpochGuard() { unsetenv("SOURCE_DATE_EPOCH"); }
};

}  // namespace

TEST_CASE("synth writes the dataset and the true weights with the dropout arithmetic") {
    TempDir dir("synth");
    synth(dir, "a");
    const auto rows = read_rows(dir / "a/data.csv");
    CHECK(rows[0].front() == "patient_id");
    CHECK(rows[0].back() == "target");
    std::map<std::string, int> per_tp;
    for (std::size_t r = 1; r < rows.size(); ++r) ++per_tp[rows[r][1]];
    CHECK(per_tp["M00"] == 60);
    CHECK(per_tp["M06"] == 48);
    CHECK(per_tp["M12"] == 36);
    const auto w = read_rows(dir / "a/true_W.csv");
    CHECK(w.size() == 9);
    CHECK(w[0] == std::vector<std::string>{"feature", "M00", "M06", "M12"});
    synth(dir, "b");
    CHECK(slurp(dir / "a/data.csv") == slurp(dir / "b/data.csv"));
    synth(dir, "c", {"--seed", "5"});
    CHECK(slurp(dir / "a/data.csv") != slurp(dir / "c/data.csv"));
}

TEST_CASE("train writes its outputs, and predict on the training data reproduces the fit") {
    TempDir dir("train");
    synth(dir, "d");
    const auto tr = run({"train", "--input", dir / "d/data.csv", "--out-dir", dir / "m", "--lambda1", "1",
                         "--lambda2", "0.5", "--lambda3", "1", "--eps-abs", "1e-9", "--eps-rel", "1e-8",
                         "--max-iters", "20000"});
    REQUIRE(tr.code == 0);
    CHECK(tr.out.find("objective") != std::string::npos);
    CHECK(tr.out.find("primal_residual") != std::string::npos);
    for (const auto* f : {"model.json", "trace.csv", "graph.csv", "manifest.json"}) CHECK(fs::exists(dir.path / "m" / f));

    const auto model = json::parse(slurp(dir / "m/model.json"));
    CHECK(model.at("format") == "mtlfsl-model");
    CHECK(model.at("schema_version") == 1);
    CHECK(model.at("weights").size() == 8);
    CHECK(model.at("graph").at("s").size() == 8);

    REQUIRE(run({"predict", "--input", dir / "d/data.csv", "--model", dir / "m/model.json", "--out-dir",
                 dir / "p"}).code == 0);
    const auto pred = read_rows(dir / "p/predictions.csv");
    const auto data = read_rows(dir / "d/data.csv");
    REQUIRE(pred.size() == data.size());
    CHECK(pred[0] == std::vector<std::string>{"patient_id", "timepoint", "prediction"});

    // Fitted values recomputed from the model's own parameters.
    const auto& w = model.at("weights");
    const auto& pre = model.at("preprocessing");
    const std::map<std::string, int> tp{{"M00", 0}, {"M06", 1}, {"M12", 2}};
    std::map<std::pair<std::string, std::string>, double> fitted;
    for (std::size_t r = 1; r < data.size(); ++r) {
        const int i = tp.at(data[r][1]);
        double yhat = pre.at("target_means").at(i).get<double>();
        for (int m = 0; m < 8; ++m) {
            const double mean = pre.at("feature_means").at(m).at(i).get<double>();
            const double sd = pre.at("feature_stds").at(m).at(i).get<double>();
            yhat += (std::stod(data[r][2 + m]) - mean) / sd * w.at(m).at(i).get<double>();
        }
        fitted[{data[r][0], data[r][1]}] = yhat;
    }
    for (std::size_t r = 1; r < pred.size(); ++r) {
        CHECK(std::abs(std::stod(pred[r][2]) - fitted.at({pred[r][0], pred[r][1]})) <= 1e-9);
    }
}

TEST_CASE("noiseless data with zero penalties is interpolated") {
    TempDir dir("interp");
    synth(dir, "d", {"--noise", "0", "--block-corr", "0.3"});
    REQUIRE(run({"train", "--input", dir / "d/data.csv", "--out-dir", dir / "m", "--lambda1", "0", "--lambda2",
                 "0", "--lambda3", "0", "--eps-abs", "1e-10", "--eps-rel", "1e-10", "--max-iters", "50000"}).code ==
            0);
    REQUIRE(run({"eval", "--input", dir / "d/data.csv", "--model", dir / "m/model.json", "--out-dir", dir / "e"})
                .code == 0);
    const auto report = json::parse(slurp(dir / "e/report.json"));
    for (const auto& v : report.at("per_task_rmse")) CHECK(v.get<double>() <= 1e-6);
    CHECK(report.at("nmse").get<double>() <= 1e-10);
    CHECK(std::abs(report.at("wr").get<double>() - 1.0) <= 1e-10);
}

TEST_CASE("eval on a hand-written model and three samples per timepoint") {
    TempDir dir("eval");
    json model;
    model["format"] = "mtlfsl-model";
    model["schema_version"] = 1;
    model["feature_names"] = {"a"};
    model["timepoints"] = {"M00", "M06"};
    model["weights"] = {{1.0, 2.0}};
    model["preprocessing"] = {{"feature_means", {{0.0, 0.0}}}, {"feature_stds", {{1.0, 1.0}}},
                              {"target_means", {0.0, 0.0}}};
    model["config"] = {{"lambda1", 0.0}, {"lambda2", 0.0}, {"lambda3", 0.0}, {"tau", 0.5}, {"rho", 1.0},
                       {"graph_mode", "correlation"}};
    model["graph"] = {{"mode", "correlation"}, {"tau", 0.5}, {"weights", {0.5, 0.5}}, {"s", {{1.0}}}};
    spit(dir.path / "model.json", model.dump());
    // M00: y = (1, 2, 3), yhat = a = (1, 2, 4). M06: y = (0, 2, 4), yhat = 2a = (0, 4, 6).
    spit(dir.path / "data.csv",
         "patient_id,timepoint,a,target\nS1,M00,1,1\nS2,M00,2,2\nS3,M00,4,3\nS1,M06,0,0\nS2,M06,2,2\nS3,M06,3,4\n");
    const auto r = run({"eval", "--input", dir / "data.csv", "--model", dir / "model.json", "--out-dir", dir / "e"});
    REQUIRE(r.code == 0);
    const auto rep = json::parse(slurp(dir / "e/report.json"));
    CHECK(std::abs(rep.at("per_task_rmse")[0].get<double>() - std::sqrt(1.0 / 3.0)) <= 1e-12);
    CHECK(std::abs(rep.at("per_task_rmse")[1].get<double>() - std::sqrt(8.0 / 3.0)) <= 1e-12);
    // nMSE: (1 / 1 + 8 / 4) / 6.
    CHECK(std::abs(rep.at("nmse").get<double>() - 0.5) <= 1e-12);
    // Correlations 3 / sqrt(2 * 42 / 9) and 12 / sqrt(8 * 168 / 9), equal weights.
    const double r0 = 3.0 / std::sqrt(2.0 * 42.0 / 9.0), r1 = 12.0 / std::sqrt(8.0 * 168.0 / 9.0);
    CHECK(std::abs(rep.at("wr").get<double>() - (r0 + r1) / 2.0) <= 1e-12);

    // A constant prediction makes the correlation undefined; eval refuses.
    spit(dir.path / "flat.csv",
         "patient_id,timepoint,a,target\nS1,M00,2,1\nS2,M00,2,2\nS3,M00,2,3\nS1,M06,0,0\nS2,M06,2,2\nS3,M06,3,4\n");
    const auto flat = run({"eval", "--input", dir / "flat.csv", "--model", dir / "model.json", "--out-dir", dir / "f"});
    CHECK(flat.code == 2);
    CHECK(flat.err.find("task 0") != std::string::npos);
}

TEST_CASE("eval refuses a dataset whose features do not match the model") {
    TempDir dir("schema");
    synth(dir, "d");
    REQUIRE(run({"train", "--input", dir / "d/data.csv", "--out-dir", dir / "m"}).code == 0);
    spit(dir.path / "other.csv", "patient_id,timepoint,zz,target\nS1,M00,1,1\nS2,M00,2,2\n");
    const auto r = run({"eval", "--input", dir / "other.csv", "--model", dir / "m/model.json", "--out-dir", dir / "e"});
    CHECK(r.code == 2);
    CHECK(r.err.find("feature") != std::string::npos);
}

TEST_CASE("exit codes") {
    TempDir dir("codes");
    synth(dir, "d");
    CHECK(run({"train", "--input", dir / "missing.csv", "--out-dir", dir / "x"}).code == 2);
    CHECK(run({"train", "--no-such-flag"}).code == 2);
    CHECK(run({}).code == 2);
    CHECK(run({"train", "--input", dir / "d/data.csv", "--out-dir", dir / "x", "--tau", "2"}).code == 2);
    CHECK(run({"train", "--input", dir / "d/data.csv", "--out-dir", dir / "x", "--graph-mode", "weird"}).code == 2);
    const auto slow = run({"train", "--input", dir / "d/data.csv", "--out-dir", dir / "slow", "--max-iters", "2"});
    CHECK(slow.code == 3);
    CHECK(fs::exists(dir.path / "slow/model.json"));
    CHECK(slow.err.find("warning") != std::string::npos);
    spit(dir.path / "bad_model.json", R"({"format":"mtlfsl-model","schema_version":99})");
    CHECK(run({"predict", "--input", dir / "d/data.csv", "--model", dir / "bad_model.json", "--out-dir", dir / "x"})
              .code == 2);
    CHECK(run({"--help"}).code == 0);
}

TEST_CASE("every command reruns byte-identically from its manifest") {
    EpochGuard epoch;
    TempDir dir("rerun");
    synth(dir, "d");
    const std::string before = slurp(dir / "d/data.csv");
    spit(dir.path / "grid.json", R"({"lambda1":[1,10],"lambda2":[0,0.5],"lambda3":[1],"tau":[0.5],"folds":3})");
    const std::vector<std::vector<std::string>> commands{
        {"train", "--input", dir / "d/data.csv", "--lambda1", "2", "--lambda2", "0.5", "--lambda3", "1"},
        {"cv", "--input", dir / "d/data.csv", "--grid-file", dir / "grid.json", "--seed", "2"},
        {"stability", "--input", dir / "d/data.csv", "--runs", "5", "--lambda1", "5", "--seed", "1"},
        {"synth", "--seed", "9", "--features", "6", "--tasks", "2", "--patients", "30"},
    };
    int k = 0;
    for (auto args : commands) {
        const auto first = dir / ("first" + std::to_string(k));
        const auto second = dir / ("second" + std::to_string(k));
        args.insert(args.end(), {"--out-dir", first});
        REQUIRE(run(args).code == 0);
        REQUIRE(run({args[0], "--config", first + "/manifest.json", "--out-dir", second}).code == 0);
        CHECK(directory_contents(first) == directory_contents(second));
        ++k;
    }
    REQUIRE(run({"train", "--input", dir / "d/data.csv", "--out-dir", dir / "t"}).code == 0);
    REQUIRE(run({"predict", "--input", dir / "d/data.csv", "--model", dir / "t/model.json", "--out-dir", dir / "p1"}).code == 0);
    REQUIRE(run({"predict", "--config", dir / "p1/manifest.json", "--out-dir", dir / "p2"}).code == 0);
    CHECK(directory_contents(dir.path / "p1") == directory_contents(dir.path / "p2"));
    REQUIRE(run({"eval", "--input", dir / "d/data.csv", "--model", dir / "t/model.json", "--out-dir", dir / "e1"}).code == 0);
    REQUIRE(run({"eval", "--config", dir / "e1/manifest.json", "--out-dir", dir / "e2"}).code == 0);
    CHECK(directory_contents(dir.path / "e1") == directory_contents(dir.path / "e2"));
    CHECK(slurp(dir / "d/data.csv") == before);
}

TEST_CASE("manifest records digests, resolved parameters and the source date") {
    EpochGuard epoch;
    TempDir dir("manifest");
    synth(dir, "d");
    REQUIRE(run({"train", "--input", dir / "d/data.csv", "--out-dir", dir / "m", "--lambda1", "3"}).code == 0);
    const auto m = json::parse(slurp(dir / "m/manifest.json"));
    CHECK(m.at("command") == "train");
    CHECK(m.at("tool") == "mtlfsl");
    CHECK(m.at("parameters").at("lambda1").get<double>() == 3.0);
    CHECK(m.at("parameters").at("lambda2").get<double>() == 0.05);
    CHECK(m.at("parameters").at("threads").get<int>() >= 1);
    CHECK_FALSE(m.at("parameters").contains("out-dir"));
    CHECK(m.at("inputs")[0].at("sha256").get<std::string>().size() == 64);
    CHECK(m.at("timestamps").at("started") == "2023-11-14T22:13:20Z");
}

TEST_CASE("explicit flags win over the config file") {
    TempDir dir("config");
    synth(dir, "d");
    spit(dir.path / "cfg.json", json{{"lambda1", 7.0}, {"lambda3", 4.0}, {"input", dir / "d/data.csv"}}.dump());
    REQUIRE(run({"train", "--config", dir / "cfg.json", "--lambda3", "2", "--out-dir", dir / "m"}).code == 0);
    const auto m = json::parse(slurp(dir / "m/manifest.json"));
    CHECK(m.at("parameters").at("lambda1").get<double>() == 7.0);
    CHECK(m.at("parameters").at("lambda3").get<double>() == 2.0);
    spit(dir.path / "bad.json", R"({"lambda1":"many"})");
    CHECK(run({"train", "--config", dir / "bad.json", "--input", dir / "d/data.csv", "--out-dir", dir / "x"}).code == 2);
}

TEST_CASE("cv with a single cell and stability with one run") {
    TempDir dir("cvstab");
    synth(dir, "d");
    spit(dir.path / "grid.json", R"({"lambda1":[2],"lambda2":[0.5],"lambda3":[1],"tau":[0.5],"folds":3})");
    REQUIRE(run({"cv", "--input", dir / "d/data.csv", "--grid-file", dir / "grid.json", "--out-dir", dir / "cv"}).code == 0);
    const auto best = json::parse(slurp(dir / "cv/cv_result.json"));
    CHECK(best.at("best_cell").at("lambda1").get<double>() == 2.0);
    CHECK(read_rows(dir / "cv/grid_scores.csv").size() == 2);
    CHECK(fs::exists(dir.path / "cv/model.json"));

    REQUIRE(run({"stability", "--input", dir / "d/data.csv", "--cv-result", dir / "cv/cv_result.json", "--runs", "1",
                 "--out-dir", dir / "st"}).code == 0);
    const auto rows = read_rows(dir / "st/selection_probability.csv");
    CHECK(rows.size() == 9);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        for (std::size_t c = 1; c < rows[r].size(); ++c) CHECK((rows[r][c] == "0" || rows[r][c] == "1"));
    }
    const auto manifest = json::parse(slurp(dir / "st/manifest.json"));
    CHECK(manifest.at("parameters").at("lambda1").get<double>() == 2.0);
    CHECK(manifest.at("parameters").at("tau").get<double>() == 0.5);
}

TEST_CASE("graph mode flag selects the signed laplacian") {
    TempDir dir("mode");
    synth(dir, "d");
    REQUIRE(run({"train", "--input", dir / "d/data.csv", "--out-dir", dir / "m", "--graph-mode", "laplacian"}).code == 0);
    const auto model = json::parse(slurp(dir / "m/model.json"));
    CHECK(model.at("graph").at("mode") == "laplacian");
    CHECK(model.at("config").at("graph_mode") == "laplacian");
}
