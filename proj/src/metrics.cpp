#include "mtlfsl/metrics.hpp"

#include "mtlfsl/format.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace mtlfsl {

namespace {

void check_aligned(const std::vector<Vector>& y, const std::vector<Vector>& yhat) {
    if (y.empty() || y.size() != yhat.size()) throw DimensionError("per-task target lists are not aligned");
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i].size() != yhat[i].size()) {
            throw DimensionError("task " + std::to_string(i) + ": prediction length differs from target length");
        }
    }
}

double sample_variance(const Vector& y) {
    const double mean = y.mean();
    return (y.array() - mean).square().sum() / static_cast<double>(y.size() - 1);
}

}  // namespace

double rmse(const Vector& y, const Vector& yhat) {
    if (y.size() == 0) throw MetricError("rMSE of an empty vector is undefined");
    if (y.size() != yhat.size()) throw DimensionError("rMSE inputs differ in length");
    return std::sqrt((y - yhat).squaredNorm() / static_cast<double>(y.size()));
}

double nmse(const std::vector<Vector>& y, const std::vector<Vector>& yhat, NmseScale scale) {
    check_aligned(y, yhat);
    double num = 0.0;
    double total_n = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i].size() < 2) throw MetricError("nMSE: task " + std::to_string(i) + " has fewer than two samples");
        double sigma = sample_variance(y[i]);
        if (scale == NmseScale::StandardDeviation) sigma = std::sqrt(sigma);
        if (!(sigma > 0.0)) throw MetricError("nMSE: task " + std::to_string(i) + " has constant targets");
        num += (y[i] - yhat[i]).squaredNorm() / sigma;
        total_n += static_cast<double>(y[i].size());
    }
    return num / total_n;
}

double weighted_r(const std::vector<Vector>& y, const std::vector<Vector>& yhat) {
    check_aligned(y, yhat);
    double num = 0.0;
    double total_n = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const auto n = y[i].size();
        if (n < 2) throw MetricError("wR: task " + std::to_string(i) + " has fewer than two samples");
        const Vector a = y[i].array() - y[i].mean();
        const Vector b = yhat[i].array() - yhat[i].mean();
        const double denom = std::sqrt(a.squaredNorm() * b.squaredNorm());
        if (!(denom > 0.0)) throw MetricError("wR: task " + std::to_string(i) + " has a constant vector");
        const double r = std::clamp(a.dot(b) / denom, -1.0, 1.0);
        num += r * static_cast<double>(n);
        total_n += static_cast<double>(n);
    }
    return num / total_n;
}

EvaluationReport evaluate(const std::vector<Vector>& y, const std::vector<Vector>& yhat,
                          const std::vector<std::string>& timepoints, NmseScale scale) {
    check_aligned(y, yhat);
    if (timepoints.size() != y.size()) throw DimensionError("timepoint labels do not match task count");
    EvaluationReport rep;
    rep.timepoints = timepoints;
    for (std::size_t i = 0; i < y.size(); ++i) {
        rep.per_task_rmse.push_back(rmse(y[i], yhat[i]));
        rep.per_task_n.push_back(y[i].size());
    }
    rep.nmse = nmse(y, yhat, scale);
    rep.wr = weighted_r(y, yhat);
    return rep;
}

std::string report_to_json(const EvaluationReport& report) {
    nlohmann::ordered_json j;
    j["timepoints"] = report.timepoints;
    j["per_task_rmse"] = report.per_task_rmse;
    j["per_task_n"] = report.per_task_n;
    j["nmse"] = report.nmse;
    j["wr"] = report.wr;
    return j.dump(2) + "\n";
}

void write_report_csv(std::ostream& out, const EvaluationReport& report) {
    out << "metric,timepoint,n,value\n";
    Index total = 0;
    for (std::size_t i = 0; i < report.timepoints.size(); ++i) {
        out << "rmse," << report.timepoints[i] << ',' << report.per_task_n[i] << ','
            << format_double(report.per_task_rmse[i]) << '\n';
        total += report.per_task_n[i];
    }
    out << "nmse,all," << total << ',' << format_double(report.nmse) << '\n';
    out << "wr,all," << total << ',' << format_double(report.wr) << '\n';
}

}  // namespace mtlfsl
