#ifndef MTLFSL_CORRELATION_HPP
#define MTLFSL_CORRELATION_HPP

#include "mtlfsl/types.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace mtlfsl {

struct PearsonResult {
    Matrix r;  // p x p, symmetric, unit diagonal
    /// Zero-variance columns; their off-diagonal entries were set to 0.
    std::vector<Index> constant_features;
};

/// Sample Pearson correlation between the columns of `design` (n >= 2 rows).
PearsonResult pearson_matrix(const Matrix& design);

/// Two-pass loop over column pairs; slow, kept as the reference for tests.
PearsonResult pearson_matrix_reference(const Matrix& design);

/// Entries with |value| < tau become exactly zero (strict inequality).
Matrix threshold(const Matrix& r, double tau);

/// Thresholded per-timepoint correlation matrices.
struct CorrelationStack {
    std::vector<Matrix> matrices;
    double tau = 0.0;
    /// One line per zero-variance feature encountered, e.g. "timepoint M12: feature f3 is constant".
    std::vector<std::string> warnings;
};

/// Correlation stack with the timepoints computed concurrently.
CorrelationStack build_correlation_stack(const TaskDataset& data, double tau, int threads = 0);

/// Same result as build_correlation_stack, one timepoint after another.
CorrelationStack build_correlation_stack_serial(const TaskDataset& data, double tau);

struct FusionGraph {
    Matrix s;        // p x p
    double tau = 0.0;
    Vector weights;  // patient-count weights, sum to one
    GraphMode mode = GraphMode::FusedCorrelation;
};

/// Patient-count-weighted sum of the stack's matrices.
FusionGraph fuse(const CorrelationStack& stack, const std::vector<Index>& patient_counts);

/// Signed graph Laplacian of a fused correlation graph:
/// off-diagonal -s_ml, diagonal sum_{l != m} |s_ml|. The input diagonal is ignored.
FusionGraph to_signed_laplacian(const FusionGraph& graph);

/// Stack, fuse and (optionally) transform in one call.
FusionGraph build_fusion_graph(const TaskDataset& data, double tau, GraphMode mode, int threads = 0,
                               std::vector<std::string>* warnings = nullptr);

/// Dense row-major CSV with feature names as header.
void write_matrix_csv(std::ostream& out, const Matrix& m, const std::vector<std::string>& names);

}  // namespace mtlfsl

#endif
