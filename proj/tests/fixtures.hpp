#ifndef MTLFSL_TESTS_FIXTURES_HPP
#define MTLFSL_TESTS_FIXTURES_HPP

#include "mtlfsl/admm.hpp"
#include "mtlfsl/correlation.hpp"
#include "mtlfsl/objective.hpp"
#include "mtlfsl/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

namespace fixture {

using mtlfsl::Index;
using mtlfsl::Matrix;
using mtlfsl::Vector;

inline std::string patient_id(Index k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "P%04ld", static_cast<long>(k));
    return buf;
}

/// Gaussian designs with some shared column structure; task i keeps the first n[i] patients.
inline mtlfsl::TaskDataset random_dataset(Index p, const std::vector<Index>& n, std::uint64_t seed,
                                          double noise = 0.5, Matrix* truth = nullptr) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    const Index t = static_cast<Index>(n.size());
    Matrix w(p, t);
    for (Index m = 0; m < p; ++m) {
        const double base = (m % 3 == 0) ? g(rng) : 0.0;
        for (Index i = 0; i < t; ++i) w(m, i) = base + 0.1 * g(rng);
    }
    std::vector<mtlfsl::Task> tasks;
    for (Index i = 0; i < t; ++i) {
        mtlfsl::Task task;
        task.design.resize(n[i], p);
        for (Index r = 0; r < n[i]; ++r) {
            const double shared = g(rng);
            for (Index m = 0; m < p; ++m) task.design(r, m) = g(rng) + (m % 2 == 0 ? 0.7 * shared : 0.0);
            task.patient_ids.push_back(patient_id(r));
        }
        task.target = task.design * w.col(i);
        for (Index r = 0; r < n[i]; ++r) task.target(r) += noise * g(rng);
        tasks.push_back(std::move(task));
    }
    if (truth) *truth = w;
    return mtlfsl::TaskDataset(std::move(tasks), {}, {});
}

inline std::vector<Matrix> designs(const mtlfsl::TaskDataset& d) {
    std::vector<Matrix> out;
    for (const auto& task : d.tasks()) out.push_back(task.design);
    return out;
}

inline std::vector<Vector> targets(const mtlfsl::TaskDataset& d) {
    std::vector<Vector> out;
    for (const auto& task : d.tasks()) out.push_back(task.target);
    return out;
}

inline double rel_diff(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

/// Subgradient taken from a split variable: sign where it is nonzero, otherwise
/// the multiplier divided by lambda, clipped into [-1, 1].
inline Matrix subgradient(const Matrix& split, const Matrix& multiplier, double lambda) {
    Matrix xi(split.rows(), split.cols());
    for (Index k = 0; k < split.size(); ++k) {
        const double z = split.data()[k];
        if (z > 0.0) xi.data()[k] = 1.0;
        else if (z < 0.0) xi.data()[k] = -1.0;
        else xi.data()[k] = std::clamp(multiplier.data()[k] / lambda, -1.0, 1.0);
    }
    return xi;
}

/// ||grad + l1 xi1 + l2 S^T xi2 + l3 xi3 H^T|| / (1 + ||grad||) with subgradients read off Q, P, V.
inline double kkt_residual(const mtlfsl::SolveResult& res, const mtlfsl::TaskDataset& data, const Matrix& s,
                           const mtlfsl::PenaltyConfig& cfg) {
    const Matrix w = res.w.values;
    const Matrix h = mtlfsl::build_temporal_operator(data.num_tasks()).values;
    const Matrix grad = mtlfsl::loss_gradient(w, data);
    Matrix r = grad;
    if (cfg.lambda1 > 0) r += cfg.lambda1 * subgradient(res.q, res.z_q, cfg.lambda1);
    if (cfg.lambda2 > 0) r += cfg.lambda2 * s.transpose() * subgradient(res.p, res.z_p, cfg.lambda2);
    if (cfg.lambda3 > 0) r += cfg.lambda3 * subgradient(res.v, res.z_v, cfg.lambda3) * h.transpose();
    return r.norm() / (1.0 + grad.norm());
}

inline mtlfsl::SolverOptions tight_options() {
    mtlfsl::SolverOptions o;
    o.eps_abs = 1e-10;
    o.eps_rel = 1e-9;
    o.max_iterations = 50000;
    o.trace_every = 10;
    return o;
}

}  // namespace fixture

#endif
