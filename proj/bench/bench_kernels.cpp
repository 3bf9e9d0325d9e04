// Serial reference vs OpenMP kernels.
#include "mtlfsl/correlation.hpp"
#include "mtlfsl/data_io.hpp"
#include "mtlfsl/model_select.hpp"
#include "mtlfsl/stability.hpp"

#include <benchmark/benchmark.h>

using namespace mtlfsl;

namespace {

TaskDataset cohort(Index p, Index t, Index patients) {
    SyntheticSpec spec;
    spec.p = p;
    spec.t = t;
    spec.n_patients = patients;
    for (Index i = 0; i < t; ++i) spec.retention.push_back(1.0 - 0.1 * static_cast<double>(i));
    spec.seed = 11;
    return preprocess(generate_synthetic(spec).table).data;
}

const TaskDataset& wide() {
    static const TaskDataset d = cohort(314, 6, 300);
    return d;
}

const TaskDataset& small() {
    static const TaskDataset d = cohort(20, 4, 120);
    return d;
}

GridSpec small_grid() {
    GridSpec g;
    g.lambda1_grid = {1, 10};
    g.lambda2_grid = {0.1, 1};
    g.lambda3_grid = {1, 10};
    g.tau_grid = {0.5};
    g.folds = 4;
    g.rho = 20.0;
    return g;
}

void BM_CorrelationSerial(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(build_correlation_stack_serial(wide(), 0.5));
}

void BM_CorrelationParallel(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(build_correlation_stack(wide(), 0.5));
}

void BM_CvSerial(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(cross_validate_serial(small(), small_grid(), {}));
}

void BM_CvParallel(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(cross_validate(small(), small_grid(), {}));
}

StabilityOptions stab_opts() {
    StabilityOptions o;
    o.runs = 20;
    return o;
}

const std::vector<PenaltyConfig> kPath{{10.0, 0.1, 10.0, 0.5, 20.0}};

void BM_StabilitySerial(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(stability_select_serial(small(), kPath, stab_opts(), {}));
}

void BM_StabilityParallel(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(stability_select(small(), kPath, stab_opts(), {}));
}

}  // namespace

BENCHMARK(BM_CorrelationSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CorrelationParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CvSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CvParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_StabilitySerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_StabilityParallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
