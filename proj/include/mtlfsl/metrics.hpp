#ifndef MTLFSL_METRICS_HPP
#define MTLFSL_METRICS_HPP

#include "mtlfsl/types.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace mtlfsl {

/// Normalizer used in the nMSE denominator.
enum class NmseScale {
    SampleVariance,  // (n - 1) divisor; the default
    StandardDeviation,
};

double rmse(const Vector& y, const Vector& yhat);

/// sum_i ||y_i - yhat_i||^2 / sigma(y_i) over sum_i n_i.
/// Throws MetricError when some task's true targets are constant.
double nmse(const std::vector<Vector>& y, const std::vector<Vector>& yhat,
            NmseScale scale = NmseScale::SampleVariance);

/// Pearson correlation of each task weighted by its sample count.
/// Throws MetricError for tasks with fewer than two samples or constant vectors.
double weighted_r(const std::vector<Vector>& y, const std::vector<Vector>& yhat);

struct EvaluationReport {
    std::vector<std::string> timepoints;
    std::vector<double> per_task_rmse;
    std::vector<Index> per_task_n;
    double nmse = 0.0;
    double wr = 0.0;
};

EvaluationReport evaluate(const std::vector<Vector>& y, const std::vector<Vector>& yhat,
                          const std::vector<std::string>& timepoints,
                          NmseScale scale = NmseScale::SampleVariance);

std::string report_to_json(const EvaluationReport& report);
/// One row per timepoint (timepoint,n,rmse) followed by the pooled nmse and wr rows.
void write_report_csv(std::ostream& out, const EvaluationReport& report);

}  // namespace mtlfsl

#endif
