#ifndef MTLFSL_ADMM_HPP
#define MTLFSL_ADMM_HPP

#include "mtlfsl/correlation.hpp"
#include "mtlfsl/objective.hpp"
#include "mtlfsl/types.hpp"

#include <Eigen/Cholesky>

#include <iosfwd>
#include <vector>

namespace mtlfsl {

/// How the coupled W-subproblem is solved each iteration.
enum class WUpdateMode {
    /// One Gauss-Seidel sweep over the columns, each an exact block solve.
    GaussSeidel,
    /// Exact solve through the eigenbasis of H H^T; requires identical X_i.
    SharedDesignEigen,
};

struct SolverOptions {
    int max_iterations = 5000;
    double eps_abs = 1e-6;
    double eps_rel = 1e-4;
    int trace_every = 1;
    WUpdateMode w_update = WUpdateMode::GaussSeidel;

    void validate() const;
};

struct TraceRecord {
    int iteration = 0;
    ObjectiveTerms terms;
    double objective = 0.0;
    double best_objective = 0.0;  // minimum objective over records so far
    double primal_q = 0.0;        // ||W - Q||_F
    double primal_p = 0.0;        // ||S W - P||_F
    double primal_v = 0.0;        // ||W H - V||_F
    double primal = 0.0;          // combined
    double dual = 0.0;            // ||grad loss(W) + rho (U_q + S U_p + U_v H^T)||_F
    double primal_tolerance = 0.0;
    double dual_tolerance = 0.0;
    double elapsed_seconds = 0.0;
};

struct ConvergenceTrace {
    std::vector<TraceRecord> records;
};

/// Trace as CSV: iteration, objective, the four summands and the residual norms.
/// Wall-clock time is left out so that the file is reproducible.
void write_trace_csv(std::ostream& out, const ConvergenceTrace& trace);

enum class StopDecision { Continue, Converged, MaxIterations };

/// Stopping rule on the most recent record. `iteration` counts completed iterations.
StopDecision check_stopping(const TraceRecord& last, int iteration, const SolverOptions& opts);

/// ADMM iterates. Duals are held in scaled form (U / rho).
struct SolverState {
    Matrix w, q, p, v;
    Matrix u_q, u_p, u_v;
    int iteration = 0;
    bool use_graph = true;  // false when lambda2 == 0: P and U_p are never touched

    // Cached per-task data, valid for one (rho, S) pair.
    double rho = 0.0;
    WUpdateMode mode = WUpdateMode::GaussSeidel;
    std::vector<Matrix> gram;         // X_i^T X_i
    std::vector<Vector> xty;          // X_i^T y_i
    std::vector<Eigen::LLT<Matrix>> factors;
    Matrix eigvecs;                   // eigenvectors of H H^T (shared-design mode)
};

/// Allocate zero iterates and factor the W-subproblem systems.
SolverState init_state(const TaskDataset& data, const Matrix& s, const Matrix& h, const PenaltyConfig& cfg,
                       WUpdateMode mode = WUpdateMode::GaussSeidel);

/// Elementwise soft threshold sign(x) max(|x| - kappa, 0).
Matrix prox_l1(const Matrix& theta, double kappa);

void update_W(SolverState& state, const Matrix& s, const Matrix& h);
void update_Q(SolverState& state, double lambda1);
void update_P(SolverState& state, const Matrix& s, double lambda2);
void update_V(SolverState& state, const Matrix& h, double lambda3);
void update_duals(SolverState& state, const Matrix& s, const Matrix& h);

/// True when every design matrix equals the first one.
bool has_shared_design(const TaskDataset& data);

enum class SolveStatus { Converged, MaxIterations };

struct SolveResult {
    WeightMatrix w;
    Matrix q;  // exactly sparse copy of W from the l1 block
    Matrix p;  // split copy of S W; empty when lambda2 == 0
    Matrix v;  // split copy of W H
    /// Unscaled multipliers rho * U for the three constraints.
    Matrix z_q, z_p, z_v;
    ConvergenceTrace trace;
    SolveStatus status = SolveStatus::MaxIterations;
    int iterations = 0;
};

SolveResult solve(const TaskDataset& data, const FusionGraph& graph, const PenaltyConfig& cfg,
                  const SolverOptions& opts = {});

}  // namespace mtlfsl

#endif
