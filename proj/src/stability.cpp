#include "mtlfsl/stability.hpp"

#include "mtlfsl/correlation.hpp"
#include "mtlfsl/format.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <set>

#ifdef MTLFSL_HAVE_OPENMP
#include <omp.h>
#endif

namespace mtlfsl {

void StabilityOptions::validate() const {
    if (runs < 1) throw InputError("stability selection needs at least one run");
    if (!(subsample_fraction > 0.0 && subsample_fraction < 1.0)) throw InputError("subsample fraction must lie in (0, 1)");
    if (!(pi > 0.0 && pi <= 1.0)) throw InputError("pi must lie in (0, 1]");
    if (!(zero_tolerance >= 0.0)) throw InputError("zero tolerance must be non-negative");
}

std::vector<std::string> stability_subsample(const TaskDataset& data, double fraction, std::uint64_t seed, int run) {
    auto ids = data.all_patients();
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(run)};
    std::mt19937_64 rng(seq);
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ids.size())));
    ids.resize(n);
    std::sort(ids.begin(), ids.end());
    return ids;
}

namespace {

struct RunOutcome {
    Eigen::MatrixXi counts;
    int unconverged = 0;
};

RunOutcome one_run(const TaskDataset& data, const std::vector<PenaltyConfig>& path, const StabilityOptions& opt,
                   const SolverOptions& solver, int run) {
    const auto ids = stability_subsample(data, opt.subsample_fraction, opt.seed, run);
    const std::set<std::string> keep(ids.begin(), ids.end());
    TaskDataset sub;
    try {
        sub = data.filter_patients([&](const std::string& id) { return keep.count(id) > 0; });
    } catch (const InputError& e) {
        throw InputError("stability run " + std::to_string(run) + ": subsample is infeasible: " + e.what());
    }
    RunOutcome out;
    out.counts = Eigen::MatrixXi::Zero(data.num_features(), data.num_tasks());
    SolverOptions quiet = solver;
    quiet.trace_every = solver.max_iterations;
    for (const auto& cfg : path) {
        const auto graph = fuse(build_correlation_stack_serial(sub, cfg.tau), sub.patient_counts());
        const auto g = cfg.graph_mode == GraphMode::SignedLaplacian ? to_signed_laplacian(graph) : graph;
        const auto res = solve(sub, g, cfg, quiet);
        if (res.status != SolveStatus::Converged) ++out.unconverged;
        out.counts += (res.q.array().abs() > opt.zero_tolerance).cast<int>().matrix();
    }
    return out;
}

StabilityResult run_all(const TaskDataset& data, const std::vector<PenaltyConfig>& path, const StabilityOptions& opt,
                        const SolverOptions& solver, bool parallel, int threads) {
    opt.validate();
    solver.validate();
    if (path.empty()) throw InputError("stability selection needs at least one penalty configuration");
    for (const auto& cfg : path) cfg.validate();

    std::vector<RunOutcome> outcomes(static_cast<std::size_t>(opt.runs));
    std::vector<std::string> errors(static_cast<std::size_t>(opt.runs));
    auto job = [&](int b) {
        try {
            outcomes[static_cast<std::size_t>(b)] = one_run(data, path, opt, solver, b);
        } catch (const Error& e) {
            errors[static_cast<std::size_t>(b)] = e.what();
        }
    };
    if (parallel) {
#ifdef MTLFSL_HAVE_OPENMP
        const int nt = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(nt)
#endif
        for (int b = 0; b < opt.runs; ++b) job(b);
    } else {
        for (int b = 0; b < opt.runs; ++b) job(b);
    }
    (void)threads;
    for (const auto& e : errors) {
        if (!e.empty()) throw InputError(e);
    }

    StabilityResult res;
    res.runs = opt.runs;
    res.subsample_fraction = opt.subsample_fraction;
    res.pi = opt.pi;
    res.lambda_path = path;
    Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(data.num_features(), data.num_tasks());
    for (const auto& o : outcomes) {
        counts += o.counts;
        res.unconverged_runs += o.unconverged;
    }
    const double denom = static_cast<double>(opt.runs) * static_cast<double>(path.size());
    res.selection_probability = counts.cast<double>() / denom;
    for (Index m = 0; m < data.num_features(); ++m) {
        if (res.selection_probability.row(m).maxCoeff() >= opt.pi) res.stable_features.push_back(m);
    }
    return res;
}

}  // namespace

StabilityResult stability_select(const TaskDataset& data, const std::vector<PenaltyConfig>& path,
                                 const StabilityOptions& options, const SolverOptions& solver, int threads) {
    return run_all(data, path, options, solver, true, threads);
}

StabilityResult stability_select_serial(const TaskDataset& data, const std::vector<PenaltyConfig>& path,
                                        const StabilityOptions& options, const SolverOptions& solver) {
    return run_all(data, path, options, solver, false, 1);
}

void write_selection_csv(std::ostream& out, const StabilityResult& result, const TaskDataset& data) {
    out << "feature";
    for (const auto& tp : data.timepoint_labels()) out << ',' << tp;
    out << '\n';
    for (Index m = 0; m < result.selection_probability.rows(); ++m) {
        out << data.feature_names()[static_cast<std::size_t>(m)];
        for (Index i = 0; i < result.selection_probability.cols(); ++i) {
            out << ',' << format_double(result.selection_probability(m, i));
        }
        out << '\n';
    }
}

std::string stable_features_json(const StabilityResult& result, const TaskDataset& data) {
    nlohmann::ordered_json j;
    j["runs"] = result.runs;
    j["subsample_fraction"] = result.subsample_fraction;
    j["pi"] = result.pi;
    auto features = nlohmann::ordered_json::array();
    for (const Index m : result.stable_features) {
        features.push_back({{"index", m},
                            {"name", data.feature_names()[static_cast<std::size_t>(m)]},
                            {"max_probability", result.selection_probability.row(m).maxCoeff()}});
    }
    j["stable_features"] = features;
    j["unconverged_runs"] = result.unconverged_runs;
    return j.dump(2) + "\n";
}

}  // namespace mtlfsl
