#include "mtlfsl/model_select.hpp"

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

std::string to_string(SelectionMetric metric) {
    switch (metric) {
        case SelectionMetric::Nmse: return "nmse";
        case SelectionMetric::Wr: return "wr";
        case SelectionMetric::MeanRmse: return "mean_rmse";
    }
    return "nmse";
}

SelectionMetric parse_selection_metric(const std::string& text) {
    if (text == "nmse") return SelectionMetric::Nmse;
    if (text == "wr") return SelectionMetric::Wr;
    if (text == "mean_rmse") return SelectionMetric::MeanRmse;
    throw InputError("unknown selection metric '" + text + "'");
}

namespace {

std::vector<std::string> shuffled_patients(const TaskDataset& data, std::uint64_t seed) {
    auto ids = data.all_patients();
    std::mt19937_64 rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng);
    return ids;
}

}  // namespace

std::pair<TaskDataset, TaskDataset> split_train_test(const TaskDataset& data, double test_fraction,
                                                     std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw InputError("test fraction must lie in (0, 1)");
    const auto ids = shuffled_patients(data, seed);
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(ids.size())));
    const std::set<std::string> test_ids(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test));
    auto train = data.filter_patients([&](const std::string& id) { return !test_ids.count(id); });
    auto test = data.filter_patients([&](const std::string& id) { return test_ids.count(id) > 0; });
    return {std::move(train), std::move(test)};
}

void GridSpec::validate() const {
    if (lambda1_grid.empty() || lambda2_grid.empty() || lambda3_grid.empty() || tau_grid.empty()) {
        throw InputError("every grid must be non-empty");
    }
    for (const auto* g : {&lambda1_grid, &lambda2_grid, &lambda3_grid}) {
        for (const double v : *g) {
            if (!(v >= 0.0) || !std::isfinite(v)) throw InputError("grid penalty weights must be non-negative");
        }
    }
    for (const double v : tau_grid) {
        if (!(v >= 0.0 && v <= 1.0)) throw InputError("tau grid values must lie in [0, 1]");
    }
    if (folds < 2) throw InputError("cross-validation needs at least two folds");
    if (!(rho > 0.0)) throw InputError("rho must be positive");
}

std::vector<GridCell> GridSpec::cells() const {
    std::vector<GridCell> out;
    for (const double l1 : lambda1_grid)
        for (const double l2 : lambda2_grid)
            for (const double l3 : lambda3_grid)
                for (const double tau : tau_grid) out.push_back({l1, l2, l3, tau});
    return out;
}

GridSpec grid_from_json(const std::string& text, GridSpec base) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("grid file is not valid JSON: ") + e.what());
    }
    try {
        if (j.contains("lambda1")) base.lambda1_grid = j.at("lambda1").get<std::vector<double>>();
        if (j.contains("lambda2")) base.lambda2_grid = j.at("lambda2").get<std::vector<double>>();
        if (j.contains("lambda3")) base.lambda3_grid = j.at("lambda3").get<std::vector<double>>();
        if (j.contains("tau")) base.tau_grid = j.at("tau").get<std::vector<double>>();
        if (j.contains("folds")) base.folds = j.at("folds").get<int>();
        if (j.contains("metric")) base.metric = parse_selection_metric(j.at("metric").get<std::string>());
        if (j.contains("seed")) base.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("grid file has a malformed field: ") + e.what());
    }
    base.validate();
    return base;
}

FoldPlan make_folds(const TaskDataset& data, int folds, std::uint64_t seed) {
    if (folds < 2) throw InputError("cross-validation needs at least two folds");
    const auto ids = shuffled_patients(data, seed);
    if (static_cast<std::size_t>(folds) > ids.size()) throw InputError("more folds than patients");
    FoldPlan plan;
    plan.validation_patients.resize(static_cast<std::size_t>(folds));
    for (std::size_t k = 0; k < ids.size(); ++k) plan.validation_patients[k % static_cast<std::size_t>(folds)].push_back(ids[k]);
    for (auto& fold : plan.validation_patients) {
        std::sort(fold.begin(), fold.end());
        const std::set<std::string> held(fold.begin(), fold.end());
        try {
            plan.train.push_back(data.filter_patients([&](const std::string& id) { return !held.count(id); }));
            plan.validation.push_back(data.filter_patients([&](const std::string& id) { return held.count(id) > 0; }));
        } catch (const InputError& e) {
            throw InputError(std::string("fold construction is infeasible: ") + e.what());
        }
    }
    return plan;
}

double selection_score(const std::vector<Vector>& y, const std::vector<Vector>& yhat, SelectionMetric metric,
                       NmseScale scale) {
    switch (metric) {
        case SelectionMetric::Nmse: return nmse(y, yhat, scale);
        case SelectionMetric::Wr: return weighted_r(y, yhat);
        case SelectionMetric::MeanRmse: {
            double sum = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) sum += rmse(y[i], yhat[i]);
            return sum / static_cast<double>(y.size());
        }
    }
    return 0.0;
}

namespace {

struct FoldOutcome {
    double score = 0.0;
    bool valid = true;
    bool converged = true;
    std::string note;
};

FoldOutcome run_fold(const FoldPlan& plan, std::size_t fold, const FusionGraph& graph, const GridCell& cell,
                     const GridSpec& grid, const SolverOptions& opts) {
    PenaltyConfig cfg{cell.lambda1, cell.lambda2, cell.lambda3, cell.tau, grid.rho, grid.graph_mode};
    SolverOptions quiet = opts;
    quiet.trace_every = opts.max_iterations;
    const auto res = solve(plan.train[fold], graph, cfg, quiet);
    const auto& val = plan.validation[fold];
    std::vector<Vector> y, yhat;
    for (Index i = 0; i < val.num_tasks(); ++i) y.push_back(val.task(i).target);
    yhat = predict(res.w.values, val);
    FoldOutcome out;
    out.converged = res.status == SolveStatus::Converged;
    try {
        out.score = selection_score(y, yhat, grid.metric, grid.nmse_scale);
    } catch (const MetricError& e) {
        out.valid = false;
        out.note = "fold " + std::to_string(fold) + ": " + e.what();
    }
    return out;
}

bool better(SelectionMetric metric, double a, double b) {
    return metric == SelectionMetric::Wr ? a > b : a < b;
}

CvResult run_cv(const TaskDataset& train, const GridSpec& grid, const SolverOptions& opts, bool parallel,
                int threads) {
    grid.validate();
    opts.validate();
    const auto plan = make_folds(train, grid.folds, grid.seed);
    const auto cells = grid.cells();
    const std::size_t n_folds = static_cast<std::size_t>(grid.folds);
    const std::size_t n_tau = grid.tau_grid.size();
    const std::size_t n_cells = cells.size();

    CvResult result;
    result.fold_graphs.assign(n_folds, std::vector<FusionGraph>(n_tau));
    std::vector<FoldOutcome> outcomes(n_cells * n_folds);
    const auto graph_jobs = static_cast<std::ptrdiff_t>(n_folds * n_tau);
    const auto solve_jobs = static_cast<std::ptrdiff_t>(n_cells * n_folds);

    // Graph construction stays serial inside each job; the jobs themselves fan out.
    auto graph_job = [&](std::ptrdiff_t job) {
        const auto f = static_cast<std::size_t>(job) / n_tau;
        const auto k = static_cast<std::size_t>(job) % n_tau;
        auto g = fuse(build_correlation_stack_serial(plan.train[f], grid.tau_grid[k]), plan.train[f].patient_counts());
        result.fold_graphs[f][k] = grid.graph_mode == GraphMode::SignedLaplacian ? to_signed_laplacian(g) : g;
    };
    auto solve_job = [&](std::ptrdiff_t job) {
        const auto c = static_cast<std::size_t>(job) / n_folds;
        const auto f = static_cast<std::size_t>(job) % n_folds;
        const auto k = static_cast<std::size_t>(
            std::find(grid.tau_grid.begin(), grid.tau_grid.end(), cells[c].tau) - grid.tau_grid.begin());
        outcomes[static_cast<std::size_t>(job)] = run_fold(plan, f, result.fold_graphs[f][k], cells[c], grid, opts);
    };

    if (parallel) {
#ifdef MTLFSL_HAVE_OPENMP
        const int nt = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(nt)
#endif
        for (std::ptrdiff_t job = 0; job < graph_jobs; ++job) graph_job(job);
#ifdef MTLFSL_HAVE_OPENMP
#pragma omp parallel for schedule(dynamic, 1) num_threads(nt)
#endif
        for (std::ptrdiff_t job = 0; job < solve_jobs; ++job) solve_job(job);
    } else {
        for (std::ptrdiff_t job = 0; job < graph_jobs; ++job) graph_job(job);
        for (std::ptrdiff_t job = 0; job < solve_jobs; ++job) solve_job(job);
    }
    (void)threads;

    bool have_best = false;
    for (std::size_t c = 0; c < n_cells; ++c) {
        CellScore score;
        score.cell = cells[c];
        for (std::size_t f = 0; f < n_folds; ++f) {
            const auto& o = outcomes[c * n_folds + f];
            if (!o.converged) ++score.unconverged_folds;
            if (!o.valid) {
                score.valid = false;
                if (score.note.empty()) score.note = o.note;
                continue;
            }
            score.fold_scores.push_back(o.score);
        }
        if (score.valid) {
            double sum = 0.0;
            for (const double s : score.fold_scores) sum += s;
            score.mean = sum / static_cast<double>(n_folds);
            double ss = 0.0;
            for (const double s : score.fold_scores) ss += (s - score.mean) * (s - score.mean);
            score.std = std::sqrt(ss / static_cast<double>(n_folds - 1));
            const bool wins = !have_best || better(grid.metric, score.mean, result.best_mean) ||
                              (score.mean == result.best_mean && score.cell < result.best_cell);
            if (wins) {
                result.best_cell = score.cell;
                result.best_mean = score.mean;
                have_best = true;
            }
        }
        if (score.unconverged_folds > 0) {
            result.warnings.push_back("cell (" + format_double(score.cell.lambda1) + ", " +
                                      format_double(score.cell.lambda2) + ", " + format_double(score.cell.lambda3) +
                                      ", " + format_double(score.cell.tau) + "): " +
                                      std::to_string(score.unconverged_folds) +
                                      " fold(s) hit the iteration limit");
        }
        result.scores.push_back(std::move(score));
    }
    if (!have_best) throw MetricError("every grid cell was disqualified by an undefined metric");

    const auto& b = result.best_cell;
    PenaltyConfig cfg{b.lambda1, b.lambda2, b.lambda3, b.tau, grid.rho, grid.graph_mode};
    result.refit_graph = build_fusion_graph(train, b.tau, grid.graph_mode, 1, &result.warnings);
    auto refit = solve(train, result.refit_graph, cfg, opts);
    result.refit_model = std::move(refit.w);
    result.refit_status = refit.status;
    if (refit.status != SolveStatus::Converged) result.warnings.push_back("refit hit the iteration limit");
    return result;
}

}  // namespace

CvResult cross_validate(const TaskDataset& train, const GridSpec& grid, const SolverOptions& opts, int threads) {
    return run_cv(train, grid, opts, true, threads);
}

CvResult cross_validate_serial(const TaskDataset& train, const GridSpec& grid, const SolverOptions& opts) {
    return run_cv(train, grid, opts, false, 1);
}

std::string cv_result_to_json(const CvResult& result, const GridSpec& grid) {
    nlohmann::ordered_json j;
    j["best_cell"] = {{"lambda1", result.best_cell.lambda1},
                      {"lambda2", result.best_cell.lambda2},
                      {"lambda3", result.best_cell.lambda3},
                      {"tau", result.best_cell.tau}};
    j["best_mean"] = result.best_mean;
    j["metric"] = to_string(grid.metric);
    j["folds"] = grid.folds;
    j["seed"] = grid.seed;
    j["graph_mode"] = to_string(grid.graph_mode);
    j["rho"] = grid.rho;
    j["refit_converged"] = result.refit_status == SolveStatus::Converged;
    j["warnings"] = result.warnings;
    return j.dump(2) + "\n";
}

void write_grid_scores_csv(std::ostream& out, const CvResult& result) {
    out << "lambda1,lambda2,lambda3,tau,mean,std,valid,unconverged_folds\n";
    for (const auto& s : result.scores) {
        out << format_double(s.cell.lambda1) << ',' << format_double(s.cell.lambda2) << ','
            << format_double(s.cell.lambda3) << ',' << format_double(s.cell.tau) << ','
            << (s.valid ? format_double(s.mean) : std::string()) << ','
            << (s.valid ? format_double(s.std) : std::string()) << ',' << (s.valid ? 1 : 0) << ','
            << s.unconverged_folds << '\n';
    }
}

}  // namespace mtlfsl
