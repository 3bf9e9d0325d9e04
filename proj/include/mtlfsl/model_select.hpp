#ifndef MTLFSL_MODEL_SELECT_HPP
#define MTLFSL_MODEL_SELECT_HPP

#include "mtlfsl/admm.hpp"
#include "mtlfsl/correlation.hpp"
#include "mtlfsl/metrics.hpp"
#include "mtlfsl/types.hpp"

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace mtlfsl {

enum class SelectionMetric { Nmse, Wr, MeanRmse };

std::string to_string(SelectionMetric metric);
SelectionMetric parse_selection_metric(const std::string& text);

/// Patient-level split: every row of a held-out patient goes to the test side.
/// Returns (train, test). The test side holds round(fraction * patients) patients.
std::pair<TaskDataset, TaskDataset> split_train_test(const TaskDataset& data, double test_fraction,
                                                     std::uint64_t seed);

struct GridCell {
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    double lambda3 = 0.0;
    double tau = 0.0;

    auto operator<=>(const GridCell&) const = default;
};

struct GridSpec {
    std::vector<double> lambda1_grid{0.01, 0.1, 1, 10, 50, 100, 500, 1000};
    std::vector<double> lambda2_grid{0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 0.1};
    std::vector<double> lambda3_grid{0.01, 0.1, 1, 10, 50, 100, 500, 1000};
    std::vector<double> tau_grid{0.3, 0.5, 0.7, 0.9};
    int folds = 10;
    SelectionMetric metric = SelectionMetric::Nmse;
    std::uint64_t seed = 0;
    double rho = 1.0;
    GraphMode graph_mode = GraphMode::FusedCorrelation;
    NmseScale nmse_scale = NmseScale::SampleVariance;

    void validate() const;
    /// Cartesian product in (lambda1, lambda2, lambda3, tau) nesting order.
    std::vector<GridCell> cells() const;
};

/// Reads the grid-file JSON: any of lambda1, lambda2, lambda3, tau (arrays),
/// folds, metric, seed. Missing keys keep the values already in `base`.
GridSpec grid_from_json(const std::string& text, GridSpec base = {});

/// Patient-level folds of a training set.
struct FoldPlan {
    std::vector<std::vector<std::string>> validation_patients;  // per fold, sorted
    std::vector<TaskDataset> train;
    std::vector<TaskDataset> validation;
};

FoldPlan make_folds(const TaskDataset& data, int folds, std::uint64_t seed);

struct CellScore {
    GridCell cell;
    std::vector<double> fold_scores;
    double mean = 0.0;
    double std = 0.0;
    bool valid = true;
    int unconverged_folds = 0;
    std::string note;  // reason for disqualification, if any
};

struct CvResult {
    std::vector<CellScore> scores;  // grid order
    GridCell best_cell;
    double best_mean = 0.0;
    WeightMatrix refit_model;
    FusionGraph refit_graph;
    SolveStatus refit_status = SolveStatus::MaxIterations;
    /// Graph used for (fold, tau index); kept so leakage can be audited.
    std::vector<std::vector<FusionGraph>> fold_graphs;
    std::vector<std::string> warnings;
};

/// Score of predictions against targets under `metric`; lower is better after sign handling.
double selection_score(const std::vector<Vector>& y, const std::vector<Vector>& yhat, SelectionMetric metric,
                       NmseScale scale);

/// Grid cells x folds run concurrently; the reduction is in grid order.
CvResult cross_validate(const TaskDataset& train, const GridSpec& grid, const SolverOptions& opts,
                        int threads = 0);

/// Serial reference for cross_validate; identical output.
CvResult cross_validate_serial(const TaskDataset& train, const GridSpec& grid, const SolverOptions& opts);

std::string cv_result_to_json(const CvResult& result, const GridSpec& grid);
void write_grid_scores_csv(std::ostream& out, const CvResult& result);

}  // namespace mtlfsl

#endif
