#ifndef MTLFSL_OBJECTIVE_HPP
#define MTLFSL_OBJECTIVE_HPP

#include "mtlfsl/correlation.hpp"
#include "mtlfsl/types.hpp"

namespace mtlfsl {

/// The four summands of the MTL-FSL objective, kept apart for tracing.
struct ObjectiveTerms {
    double loss = 0.0;      // 1/2 sum_i ||X_i w_i - y_i||^2
    double sparsity = 0.0;  // lambda1 * ||W||_1
    double graph = 0.0;     // lambda2 * ||S W||_1
    double fusion = 0.0;    // lambda3 * ||W H||_1

    double total() const { return loss + sparsity + graph + fusion; }
};

ObjectiveTerms objective_terms(const WeightMatrix& w, const TaskDataset& data, const FusionGraph& graph,
                               const TemporalDifferenceOperator& h, const PenaltyConfig& cfg);

inline double objective_value(const WeightMatrix& w, const TaskDataset& data, const FusionGraph& graph,
                              const TemporalDifferenceOperator& h, const PenaltyConfig& cfg) {
    return objective_terms(w, data, graph, h, cfg).total();
}

/// Gradient of the squared loss: column i is X_i^T (X_i w_i - y_i).
Matrix loss_gradient(const Matrix& w, const TaskDataset& data);

/// Per-task predictions X_i w_i.
std::vector<Vector> predict(const Matrix& w, const TaskDataset& data);

}  // namespace mtlfsl

#endif
