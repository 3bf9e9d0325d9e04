#include "mtlfsl/correlation.hpp"

#include "mtlfsl/format.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#ifdef MTLFSL_HAVE_OPENMP
#include <omp.h>
#endif

namespace mtlfsl {

namespace {

// A column counts as constant when its spread is negligible next to its magnitude.
bool is_constant(double sum_sq_dev, Index n, double max_abs) {
    const double sd = std::sqrt(sum_sq_dev / static_cast<double>(n - 1));
    return sd <= 1e-13 * (1.0 + max_abs);
}

void finish(PearsonResult& res) {
    const Index p = res.r.rows();
    for (const Index m : res.constant_features) {
        res.r.row(m).setZero();
        res.r.col(m).setZero();
    }
    for (Index m = 0; m < p; ++m) {
        res.r(m, m) = 1.0;
        for (Index l = m + 1; l < p; ++l) {
            const double v = std::clamp(res.r(m, l), -1.0, 1.0);
            res.r(m, l) = v;
            res.r(l, m) = v;
        }
    }
}

void check_rows(const Matrix& design) {
    if (design.rows() < 2) throw InputError("Pearson correlation needs at least two samples");
    if (design.cols() < 1) throw DimensionError("Pearson correlation needs at least one column");
}

}  // namespace

PearsonResult pearson_matrix(const Matrix& design) {
    check_rows(design);
    const Index n = design.rows();
    const Index p = design.cols();
    Matrix z = design.rowwise() - design.colwise().mean();
    PearsonResult res;
    for (Index m = 0; m < p; ++m) {
        const double ss = z.col(m).squaredNorm();
        if (is_constant(ss, n, design.col(m).cwiseAbs().maxCoeff())) {
            res.constant_features.push_back(m);
            z.col(m).setZero();
        } else {
            z.col(m) /= std::sqrt(ss);
        }
    }
    res.r.resize(p, p);
    res.r.triangularView<Eigen::Upper>() = z.transpose() * z;
    finish(res);
    return res;
}

PearsonResult pearson_matrix_reference(const Matrix& design) {
    check_rows(design);
    const Index n = design.rows();
    const Index p = design.cols();
    std::vector<double> mean(static_cast<std::size_t>(p), 0.0);
    std::vector<double> ss(static_cast<std::size_t>(p), 0.0);
    PearsonResult res;
    for (Index m = 0; m < p; ++m) {
        double sum = 0.0;
        double max_abs = 0.0;
        for (Index k = 0; k < n; ++k) {
            sum += design(k, m);
            max_abs = std::max(max_abs, std::abs(design(k, m)));
        }
        mean[m] = sum / static_cast<double>(n);
        for (Index k = 0; k < n; ++k) ss[m] += (design(k, m) - mean[m]) * (design(k, m) - mean[m]);
        if (is_constant(ss[m], n, max_abs)) res.constant_features.push_back(m);
    }
    res.r = Matrix::Zero(p, p);
    for (Index m = 0; m < p; ++m) {
        for (Index l = m + 1; l < p; ++l) {
            double cov = 0.0;
            for (Index k = 0; k < n; ++k) cov += (design(k, m) - mean[m]) * (design(k, l) - mean[l]);
            res.r(m, l) = cov / std::sqrt(ss[m] * ss[l]);
        }
    }
    finish(res);
    return res;
}

Matrix threshold(const Matrix& r, double tau) {
    if (!(tau >= 0.0 && tau <= 1.0)) throw InputError("tau must lie in [0, 1]");
    return r.unaryExpr([tau](double v) { return std::abs(v) < tau ? 0.0 : v; });
}

namespace {

Matrix stack_entry(const TaskDataset& data, Index i, double tau, std::vector<std::string>& warnings) {
    auto res = pearson_matrix(data.task(i).design);
    for (const Index m : res.constant_features) {
        warnings.push_back("timepoint " + data.timepoint_labels()[static_cast<std::size_t>(i)] + ": feature " +
                           data.feature_names()[static_cast<std::size_t>(m)] +
                           " is constant; treated as an isolated node");
    }
    return threshold(res.r, tau);
}

CorrelationStack assemble(std::vector<Matrix> matrices, std::vector<std::vector<std::string>> warnings,
                          double tau) {
    CorrelationStack stack;
    stack.matrices = std::move(matrices);
    stack.tau = tau;
    for (auto& w : warnings) stack.warnings.insert(stack.warnings.end(), w.begin(), w.end());
    return stack;
}

}  // namespace

CorrelationStack build_correlation_stack(const TaskDataset& data, double tau, int threads) {
    if (!(tau >= 0.0 && tau <= 1.0)) throw InputError("tau must lie in [0, 1]");
    const Index t = data.num_tasks();
    std::vector<Matrix> matrices(static_cast<std::size_t>(t));
    std::vector<std::vector<std::string>> warnings(static_cast<std::size_t>(t));
#ifdef MTLFSL_HAVE_OPENMP
    const int nt = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(nt)
#endif
    for (Index i = 0; i < t; ++i) {
        matrices[static_cast<std::size_t>(i)] = stack_entry(data, i, tau, warnings[static_cast<std::size_t>(i)]);
    }
    (void)threads;
    return assemble(std::move(matrices), std::move(warnings), tau);
}

CorrelationStack build_correlation_stack_serial(const TaskDataset& data, double tau) {
    if (!(tau >= 0.0 && tau <= 1.0)) throw InputError("tau must lie in [0, 1]");
    const Index t = data.num_tasks();
    std::vector<Matrix> matrices;
    std::vector<std::vector<std::string>> warnings(static_cast<std::size_t>(t));
    for (Index i = 0; i < t; ++i) matrices.push_back(stack_entry(data, i, tau, warnings[static_cast<std::size_t>(i)]));
    return assemble(std::move(matrices), std::move(warnings), tau);
}

FusionGraph fuse(const CorrelationStack& stack, const std::vector<Index>& patient_counts) {
    if (stack.matrices.empty()) throw DimensionError("cannot fuse an empty correlation stack");
    if (stack.matrices.size() != patient_counts.size()) {
        throw DimensionError("correlation stack and patient counts differ in length");
    }
    double total = 0.0;
    for (const Index c : patient_counts) {
        if (c < 0) throw InputError("patient counts must be non-negative");
        total += static_cast<double>(c);
    }
    if (total <= 0.0) throw InputError("patient counts are all zero");

    const Index p = stack.matrices.front().rows();
    FusionGraph g;
    g.tau = stack.tau;
    g.mode = GraphMode::FusedCorrelation;
    g.weights.resize(static_cast<Index>(patient_counts.size()));
    g.s = Matrix::Zero(p, p);
    for (std::size_t k = 0; k < patient_counts.size(); ++k) {
        const auto& r = stack.matrices[k];
        if (r.rows() != p || r.cols() != p) throw DimensionError("correlation matrices differ in size");
        g.weights(static_cast<Index>(k)) = static_cast<double>(patient_counts[k]) / total;
        g.s += g.weights(static_cast<Index>(k)) * r;
    }
    return g;
}

FusionGraph to_signed_laplacian(const FusionGraph& graph) {
    if (graph.mode != GraphMode::FusedCorrelation) {
        throw InputError("signed Laplacian transform expects a fused correlation graph");
    }
    const Index p = graph.s.rows();
    FusionGraph out = graph;
    out.mode = GraphMode::SignedLaplacian;
    out.s = Matrix::Zero(p, p);
    for (Index m = 0; m < p; ++m) {
        double degree = 0.0;
        for (Index l = 0; l < p; ++l) {
            if (l == m) continue;
            out.s(m, l) = -graph.s(m, l);
            degree += std::abs(graph.s(m, l));
        }
        out.s(m, m) = degree;
    }
    return out;
}

FusionGraph build_fusion_graph(const TaskDataset& data, double tau, GraphMode mode, int threads,
                               std::vector<std::string>* warnings) {
    const auto stack = build_correlation_stack(data, tau, threads);
    if (warnings) warnings->insert(warnings->end(), stack.warnings.begin(), stack.warnings.end());
    auto g = fuse(stack, data.patient_counts());
    return mode == GraphMode::SignedLaplacian ? to_signed_laplacian(g) : g;
}

void write_matrix_csv(std::ostream& out, const Matrix& m, const std::vector<std::string>& names) {
    if (static_cast<Index>(names.size()) != m.cols()) throw DimensionError("header length does not match columns");
    for (std::size_t k = 0; k < names.size(); ++k) out << (k ? "," : "") << names[k];
    out << '\n';
    for (Index r = 0; r < m.rows(); ++r) {
        for (Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << format_double(m(r, c));
        out << '\n';
    }
}

}  // namespace mtlfsl
