#include "mtlfsl/objective.hpp"

#include <cmath>

namespace mtlfsl {

namespace {

void check_shapes(const Matrix& w, const TaskDataset& data) {
    if (w.rows() != data.num_features() || w.cols() != data.num_tasks()) {
        throw DimensionError("weight matrix is " + std::to_string(w.rows()) + "x" + std::to_string(w.cols()) +
                             ", dataset needs " + std::to_string(data.num_features()) + "x" +
                             std::to_string(data.num_tasks()));
    }
}

}  // namespace

ObjectiveTerms objective_terms(const WeightMatrix& w, const TaskDataset& data, const FusionGraph& graph,
                               const TemporalDifferenceOperator& h, const PenaltyConfig& cfg) {
    const Matrix& W = w.values;
    check_shapes(W, data);
    const Index p = data.num_features();
    const Index t = data.num_tasks();
    if (h.values.rows() != t || h.values.cols() != t - 1) throw DimensionError("H does not match task count");

    ObjectiveTerms terms;
    for (Index i = 0; i < t; ++i) {
        const auto& task = data.task(i);
        terms.loss += 0.5 * (task.design * W.col(i) - task.target).squaredNorm();
    }
    terms.sparsity = cfg.lambda1 * W.cwiseAbs().sum();
    if (cfg.lambda2 != 0.0) {
        if (graph.s.rows() != p || graph.s.cols() != p) throw DimensionError("S does not match feature count");
        terms.graph = cfg.lambda2 * (graph.s * W).cwiseAbs().sum();
    }
    terms.fusion = cfg.lambda3 * (W * h.values).cwiseAbs().sum();
    if (!std::isfinite(terms.total())) throw InternalError("objective evaluated to a non-finite value");
    return terms;
}

Matrix loss_gradient(const Matrix& w, const TaskDataset& data) {
    check_shapes(w, data);
    Matrix g(w.rows(), w.cols());
    for (Index i = 0; i < data.num_tasks(); ++i) {
        const auto& task = data.task(i);
        g.col(i) = task.design.transpose() * (task.design * w.col(i) - task.target);
    }
    return g;
}

std::vector<Vector> predict(const Matrix& w, const TaskDataset& data) {
    check_shapes(w, data);
    std::vector<Vector> out;
    out.reserve(static_cast<std::size_t>(data.num_tasks()));
    for (Index i = 0; i < data.num_tasks(); ++i) out.push_back(data.task(i).design * w.col(i));
    return out;
}

}  // namespace mtlfsl
