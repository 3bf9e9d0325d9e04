#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "fixtures.hpp"

#include "mtlfsl/data_io.hpp"
#include "mtlfsl/stability.hpp"

#include "json.hpp"

#include <sstream>

using namespace mtlfsl;

namespace {

TaskDataset cohort(std::uint64_t seed, Index patients = 80) {
    SyntheticSpec spec;
    spec.p = 10;
    spec.t = 3;
    spec.n_patients = patients;
    spec.retention = {1.0, 0.9, 0.8};
    spec.signal_features = 3;
    spec.block_size = 10;
    spec.within_block_corr = 0.3;
    spec.seed = seed;
    return preprocess(generate_synthetic(spec).table).data;
}

StabilityOptions options(int runs) {
    StabilityOptions o;
    o.runs = runs;
    o.seed = 3;
    return o;
}

}  // namespace

TEST_CASE("a single run gives 0/1 probabilities") {
    const auto d = cohort(1);
    const auto res = stability_select(d, PenaltyConfig{5.0, 0.5, 5.0}, options(1));
    CHECK(res.selection_probability.rows() == 10);
    CHECK(res.selection_probability.cols() == 3);
    for (Index k = 0; k < res.selection_probability.size(); ++k) {
        const double v = res.selection_probability.data()[k];
        CHECK((v == 0.0 || v == 1.0));
    }
}

TEST_CASE("lambda1 beyond every subsample's null threshold selects nothing") {
    const auto d = cohort(2);
    double thresh = 0.0;
    for (const auto& task : d.tasks()) thresh = std::max(thresh, (task.design.transpose() * task.target).cwiseAbs().maxCoeff());
    const auto res = stability_select(d, PenaltyConfig{thresh, 0.0, 0.0}, options(10));
    CHECK(res.selection_probability.isZero(0.0));
    CHECK(res.stable_features.empty());
}

TEST_CASE("signal features separate from noise") {
    const auto d = cohort(3, 150);
    const auto res = stability_select(d, PenaltyConfig{40.0, 0.5, 5.0}, options(30));
    double min_signal = 1.0, max_noise = 0.0;
    for (Index m = 0; m < 10; ++m) {
        const double v = res.selection_probability.row(m).maxCoeff();
        if (m < 3) min_signal = std::min(min_signal, v);
        else max_noise = std::max(max_noise, v);
    }
    CHECK(min_signal >= 0.8);
    CHECK(max_noise <= 0.2);
    CHECK(res.stable_features == std::vector<Index>{0, 1, 2});
}

TEST_CASE("fixed seed reproduces; threads do not matter") {
    const auto d = cohort(4);
    const PenaltyConfig cfg{5.0, 0.5, 5.0};
    const auto serial = stability_select_serial(d, {cfg}, options(12));
    for (const int threads : {0, 1, 3}) {
        const auto par = stability_select(d, cfg, options(12), {}, threads);
        CHECK(par.selection_probability == serial.selection_probability);
        CHECK(par.stable_features == serial.stable_features);
    }
    CHECK(stability_subsample(d, 0.5, 3, 0) != stability_subsample(d, 0.5, 4, 0));
}

TEST_CASE("raising the zero tolerance never raises a probability") {
    const auto d = cohort(5);
    const PenaltyConfig cfg{2.0, 0.5, 2.0};
    Matrix prev;
    for (const double tol : {0.0, 1e-8, 1e-3, 1e-2, 0.1, 1.0}) {
        auto o = options(8);
        o.zero_tolerance = tol;
        const auto res = stability_select(d, cfg, o);
        if (prev.size()) CHECK((res.selection_probability.array() <= prev.array()).all());
        prev = res.selection_probability;
    }
}

TEST_CASE("subsamples draw the requested share of patients") {
    const auto d = cohort(6);
    const auto ids = stability_subsample(d, 0.5, 1, 7);
    CHECK(ids.size() == 40);
    CHECK(std::is_sorted(ids.begin(), ids.end()));
    CHECK(stability_subsample(d, 0.5, 1, 7) == ids);
    CHECK(stability_subsample(d, 0.5, 1, 8) != ids);
}

TEST_CASE("a lambda path averages over its configurations") {
    const auto d = cohort(7);
    const std::vector<PenaltyConfig> path{{2.0, 0.5, 2.0}, {1e9, 0.0, 0.0}};
    const auto res = stability_select(d, path, options(4));
    const auto single = stability_select(d, path[0], options(4));
    CHECK((res.selection_probability - 0.5 * single.selection_probability).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("stability option validation and infeasible subsamples") {
    const auto d = cohort(8);
    auto o = options(0);
    CHECK_THROWS_AS(stability_select(d, PenaltyConfig{}, o), InputError);
    o = options(2);
    o.subsample_fraction = 1.0;
    CHECK_THROWS_AS(stability_select(d, PenaltyConfig{}, o), InputError);
    o = options(2);
    o.pi = 0.0;
    CHECK_THROWS_AS(stability_select(d, PenaltyConfig{}, o), InputError);
    const auto tiny = fixture::random_dataset(3, {4, 2}, 1);
    o = options(3);
    o.subsample_fraction = 0.25;
    CHECK_THROWS_AS(stability_select(tiny, PenaltyConfig{1.0}, o), InputError);
}

TEST_CASE("stability outputs") {
    const auto d = cohort(9);
    const auto res = stability_select(d, PenaltyConfig{5.0, 0.5, 5.0}, options(5));
    std::ostringstream os;
    write_selection_csv(os, res, d);
    std::istringstream in(os.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "feature,M00,M06,M12");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 10);
    const auto j = nlohmann::json::parse(stable_features_json(res, d));
    CHECK(j.at("runs") == 5);
    CHECK(j.at("stable_features").size() == res.stable_features.size());
}
