#include "mtlfsl/types.hpp"

#include <algorithm>
#include <cmath>

namespace mtlfsl {

TaskDataset::TaskDataset(std::vector<Task> tasks, std::vector<std::string> feature_names,
                         std::vector<std::string> timepoint_labels)
    : tasks_(std::move(tasks)),
      feature_names_(std::move(feature_names)),
      timepoint_labels_(std::move(timepoint_labels)) {
    p_ = tasks_.empty() ? 0 : tasks_.front().design.cols();
    if (feature_names_.empty()) {
        for (Index m = 0; m < p_; ++m) feature_names_.push_back("f" + std::to_string(m + 1));
    }
    if (timepoint_labels_.empty()) {
        for (std::size_t i = 0; i < tasks_.size(); ++i) timepoint_labels_.push_back("T" + std::to_string(i));
    }
    for (auto& task : tasks_) {
        if (task.patient_ids.empty()) {
            for (Index r = 0; r < task.design.rows(); ++r) task.patient_ids.push_back("P" + std::to_string(r));
        }
    }
    validate();
}

void TaskDataset::validate() const {
    if (tasks_.size() < 2) throw DimensionError("a dataset needs at least two tasks");
    if (p_ < 1) throw DimensionError("a dataset needs at least one feature");
    if (static_cast<Index>(feature_names_.size()) != p_) {
        throw DimensionError("feature name count does not match design column count");
    }
    if (timepoint_labels_.size() != tasks_.size()) {
        throw DimensionError("timepoint label count does not match task count");
    }
    for (std::size_t i = 0; i < tasks_.size(); ++i) {
        const auto& task = tasks_[i];
        const auto label = timepoint_labels_[i];
        if (task.design.cols() != p_) {
            throw DimensionError("task " + label + " has " + std::to_string(task.design.cols()) +
                                 " columns, expected " + std::to_string(p_));
        }
        if (task.target.size() != task.design.rows() ||
            static_cast<Index>(task.patient_ids.size()) != task.design.rows()) {
            throw DimensionError("task " + label + " has inconsistent row counts");
        }
        if (task.design.rows() < 2) {
            throw InputError("task " + label + " has fewer than two samples");
        }
        if (!task.design.allFinite() || !task.target.allFinite()) {
            throw InputError("task " + label + " contains non-finite values");
        }
    }
}

std::vector<Index> TaskDataset::patient_counts() const {
    std::vector<Index> counts;
    counts.reserve(tasks_.size());
    for (const auto& task : tasks_) counts.push_back(task.design.rows());
    return counts;
}

std::vector<std::string> TaskDataset::all_patients() const {
    std::vector<std::string> ids;
    for (const auto& task : tasks_) ids.insert(ids.end(), task.patient_ids.begin(), task.patient_ids.end());
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

std::string to_string(GraphMode mode) {
    return mode == GraphMode::FusedCorrelation ? "correlation" : "laplacian";
}

GraphMode parse_graph_mode(const std::string& text) {
    if (text == "correlation") return GraphMode::FusedCorrelation;
    if (text == "laplacian") return GraphMode::SignedLaplacian;
    throw InputError("unknown graph mode '" + text + "' (expected correlation or laplacian)");
}

void PenaltyConfig::validate() const {
    auto ok = [](double v) { return std::isfinite(v) && v >= 0.0; };
    if (!ok(lambda1) || !ok(lambda2) || !ok(lambda3)) {
        throw InputError("penalty weights must be finite and non-negative");
    }
    if (!(tau >= 0.0 && tau <= 1.0)) throw InputError("tau must lie in [0, 1]");
    if (!(rho > 0.0) || !std::isfinite(rho)) throw InputError("rho must be positive");
}

TemporalDifferenceOperator build_temporal_operator(Index t) {
    if (t < 2) throw DimensionError("the temporal difference operator needs t >= 2");
    Matrix h = Matrix::Zero(t, t - 1);
    for (Index j = 0; j < t - 1; ++j) {
        h(j, j) = 1.0;
        h(j + 1, j) = -1.0;
    }
    return {std::move(h)};
}

}  // namespace mtlfsl
