#ifndef MTLFSL_TYPES_HPP
#define MTLFSL_TYPES_HPP

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mtlfsl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Base of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Inconsistent shapes between cooperating objects.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Malformed user input: bad CSV, out-of-range parameters, infeasible splits.
class InputError : public Error {
public:
    using Error::Error;
};

/// A metric is mathematically undefined on the supplied data.
class MetricError : public Error {
public:
    using Error::Error;
};

/// Broken internal invariant (e.g. a factorization that must succeed did not).
class InternalError : public Error {
public:
    using Error::Error;
};

/// One regression task: the design matrix and target of one timepoint.
struct Task {
    Matrix design;  // n_i x p
    Vector target;  // n_i
    std::vector<std::string> patient_ids;  // row labels, one per row of design
};

/// Per-timepoint regression problems sharing a feature space.
///
/// Tasks may have different row counts (cohort attrition). Patient ids are
/// carried so that splits and folds can be made at patient level.
class TaskDataset {
public:
    TaskDataset() = default;
    TaskDataset(std::vector<Task> tasks, std::vector<std::string> feature_names,
                std::vector<std::string> timepoint_labels);

    Index num_features() const { return p_; }
    Index num_tasks() const { return static_cast<Index>(tasks_.size()); }

    const Task& task(Index i) const { return tasks_.at(static_cast<std::size_t>(i)); }
    const std::vector<Task>& tasks() const { return tasks_; }
    const std::vector<std::string>& feature_names() const { return feature_names_; }
    const std::vector<std::string>& timepoint_labels() const { return timepoint_labels_; }

    /// Row counts per task.
    std::vector<Index> patient_counts() const;

    /// Sorted, de-duplicated patient ids over all tasks.
    std::vector<std::string> all_patients() const;

    /// Restrict every task to rows whose patient id satisfies `keep`.
    template <typename Pred>
    TaskDataset filter_patients(Pred keep) const;

private:
    void validate() const;

    std::vector<Task> tasks_;
    std::vector<std::string> feature_names_;
    std::vector<std::string> timepoint_labels_;
    Index p_ = 0;
};

/// Coefficients, one column per task.
struct WeightMatrix {
    Matrix values;  // p x t
};

enum class GraphMode { FusedCorrelation, SignedLaplacian };

std::string to_string(GraphMode mode);
GraphMode parse_graph_mode(const std::string& text);

struct PenaltyConfig {
    double lambda1 = 0.0;  // elementwise sparsity
    double lambda2 = 0.0;  // feature-similarity graph
    double lambda3 = 0.0;  // temporal fusion
    double tau = 0.5;
    double rho = 1.0;
    GraphMode graph_mode = GraphMode::FusedCorrelation;

    /// Throws InputError when a field is out of range.
    void validate() const;
};

/// Forward-difference operator H (t x (t-1)); W * H has columns w_j - w_{j+1}.
struct TemporalDifferenceOperator {
    Matrix values;
};

TemporalDifferenceOperator build_temporal_operator(Index t);

template <typename Pred>
TaskDataset TaskDataset::filter_patients(Pred keep) const {
    std::vector<Task> out;
    out.reserve(tasks_.size());
    for (const auto& task : tasks_) {
        std::vector<Index> rows;
        for (std::size_t r = 0; r < task.patient_ids.size(); ++r) {
            if (keep(task.patient_ids[r])) rows.push_back(static_cast<Index>(r));
        }
        Task sub;
        sub.design.resize(static_cast<Index>(rows.size()), p_);
        sub.target.resize(static_cast<Index>(rows.size()));
        for (std::size_t k = 0; k < rows.size(); ++k) {
            const auto r = rows[k];
            sub.design.row(static_cast<Index>(k)) = task.design.row(r);
            sub.target(static_cast<Index>(k)) = task.target(r);
            sub.patient_ids.push_back(task.patient_ids[static_cast<std::size_t>(r)]);
        }
        out.push_back(std::move(sub));
    }
    return TaskDataset(std::move(out), feature_names_, timepoint_labels_);
}

}  // namespace mtlfsl

#endif
