#include "mtlfsl/admm.hpp"

#include "mtlfsl/format.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>

namespace mtlfsl {

void SolverOptions::validate() const {
    if (max_iterations < 1) throw InputError("max_iterations must be positive");
    if (!(eps_abs > 0.0) || !(eps_rel > 0.0)) throw InputError("stopping tolerances must be positive");
    if (trace_every < 1) throw InputError("trace_every must be positive");
}

Matrix prox_l1(const Matrix& theta, double kappa) {
    if (!(kappa >= 0.0)) throw InputError("soft-threshold level must be non-negative");
    return theta.unaryExpr([kappa](double x) {
        const double mag = std::abs(x) - kappa;
        if (mag <= 0.0) return 0.0;
        return x > 0.0 ? mag : -mag;
    });
}

bool has_shared_design(const TaskDataset& data) {
    const auto& first = data.task(0).design;
    for (Index i = 1; i < data.num_tasks(); ++i) {
        const auto& d = data.task(i).design;
        if (d.rows() != first.rows() || d != first) return false;
    }
    return true;
}

namespace {

Eigen::LLT<Matrix> factor(const Matrix& m) {
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() != Eigen::Success) {
        throw InternalError("W-subproblem matrix is not positive definite; rho must be > 0");
    }
    return llt;
}

}  // namespace

SolverState init_state(const TaskDataset& data, const Matrix& s, const Matrix& h, const PenaltyConfig& cfg,
                       WUpdateMode mode) {
    cfg.validate();
    const Index p = data.num_features();
    const Index t = data.num_tasks();
    if (h.rows() != t || h.cols() != t - 1) throw DimensionError("H does not match task count");

    SolverState st;
    st.rho = cfg.rho;
    st.mode = mode;
    st.use_graph = cfg.lambda2 != 0.0;
    st.w = Matrix::Zero(p, t);
    st.q = Matrix::Zero(p, t);
    st.u_q = Matrix::Zero(p, t);
    st.v = Matrix::Zero(p, t - 1);
    st.u_v = Matrix::Zero(p, t - 1);
    if (st.use_graph) {
        if (s.rows() != p || s.cols() != p) throw DimensionError("S does not match feature count");
        st.p = Matrix::Zero(p, t);
        st.u_p = Matrix::Zero(p, t);
    }

    for (Index i = 0; i < t; ++i) {
        const auto& task = data.task(i);
        st.gram.push_back(task.design.transpose() * task.design);
        st.xty.push_back(task.design.transpose() * task.target);
    }

    Matrix base = Matrix::Identity(p, p) * cfg.rho;
    if (st.use_graph) base.noalias() += cfg.rho * (s * s);
    const Matrix f = h * h.transpose();

    if (mode == WUpdateMode::SharedDesignEigen) {
        if (!has_shared_design(data)) throw InputError("eigen W-update requires identical design matrices");
        Eigen::SelfAdjointEigenSolver<Matrix> eig(f);
        st.eigvecs = eig.eigenvectors();
        for (Index k = 0; k < t; ++k) {
            const double mu = std::max(0.0, eig.eigenvalues()(k));
            Matrix m = st.gram[0] + base;
            m.diagonal().array() += cfg.rho * mu;
            st.factors.push_back(factor(m));
        }
    } else {
        // Column i's block solve also carries rho * F_ii from the temporal coupling.
        for (Index i = 0; i < t; ++i) {
            Matrix m = st.gram[static_cast<std::size_t>(i)] + base;
            m.diagonal().array() += cfg.rho * f(i, i);
            st.factors.push_back(factor(m));
        }
    }
    return st;
}

void update_W(SolverState& st, const Matrix& s, const Matrix& h) {
    const Index t = st.w.cols();
    const double rho = st.rho;

    Matrix c = st.q - st.u_q;
    if (st.use_graph) c.noalias() += s * (st.p - st.u_p);
    c.noalias() += (st.v - st.u_v) * h.transpose();
    c *= rho;
    for (Index i = 0; i < t; ++i) c.col(i) += st.xty[static_cast<std::size_t>(i)];

    if (st.mode == WUpdateMode::SharedDesignEigen) {
        const Matrix ct = c * st.eigvecs;
        Matrix wt(ct.rows(), t);
        for (Index k = 0; k < t; ++k) wt.col(k) = st.factors[static_cast<std::size_t>(k)].solve(ct.col(k));
        st.w.noalias() = wt * st.eigvecs.transpose();
        return;
    }

    const Matrix f = h * h.transpose();
    for (Index i = 0; i < t; ++i) {
        Vector rhs = c.col(i);
        for (Index j = 0; j < t; ++j) {
            if (j != i && f(j, i) != 0.0) rhs.noalias() -= rho * f(j, i) * st.w.col(j);
        }
        st.w.col(i) = st.factors[static_cast<std::size_t>(i)].solve(rhs);
    }
}

void update_Q(SolverState& st, double lambda1) { st.q = prox_l1(st.w + st.u_q, lambda1 / st.rho); }

void update_P(SolverState& st, const Matrix& s, double lambda2) {
    if (!st.use_graph) return;
    st.p = prox_l1(s * st.w + st.u_p, lambda2 / st.rho);
}

void update_V(SolverState& st, const Matrix& h, double lambda3) {
    st.v = prox_l1(st.w * h + st.u_v, lambda3 / st.rho);
}

void update_duals(SolverState& st, const Matrix& s, const Matrix& h) {
    st.u_q += st.w - st.q;
    if (st.use_graph) st.u_p += s * st.w - st.p;
    st.u_v += st.w * h - st.v;
}

StopDecision check_stopping(const TraceRecord& last, int iteration, const SolverOptions& opts) {
    if (last.primal <= last.primal_tolerance && last.dual <= last.dual_tolerance) return StopDecision::Converged;
    if (iteration >= opts.max_iterations) return StopDecision::MaxIterations;
    return StopDecision::Continue;
}

namespace {

// Residual norms and stopping tolerances; cheap enough to run every iteration.
TraceRecord residuals(const SolverState& st, const Matrix& s, const Matrix& h, const SolverOptions& opts) {
    const Index p = st.w.rows();
    const Index t = st.w.cols();

    TraceRecord rec;
    rec.iteration = st.iteration;
    const Matrix wh = st.w * h;
    rec.primal_q = (st.w - st.q).norm();
    rec.primal_v = (wh - st.v).norm();
    double aw_sq = st.w.squaredNorm() + wh.squaredNorm();
    double z_sq = st.q.squaredNorm() + st.v.squaredNorm();
    Matrix dual_term = st.u_q + st.u_v * h.transpose();
    double constraints = static_cast<double>(p * t + p * (t - 1));
    if (st.use_graph) {
        const Matrix sw = s * st.w;
        rec.primal_p = (sw - st.p).norm();
        aw_sq += sw.squaredNorm();
        z_sq += st.p.squaredNorm();
        dual_term.noalias() += s * st.u_p;
        constraints += static_cast<double>(p * t);
    }
    rec.primal = std::sqrt(rec.primal_q * rec.primal_q + rec.primal_p * rec.primal_p + rec.primal_v * rec.primal_v);
    dual_term *= st.rho;

    Matrix grad(p, t);
    for (Index i = 0; i < t; ++i) {
        grad.col(i) = st.gram[static_cast<std::size_t>(i)] * st.w.col(i) - st.xty[static_cast<std::size_t>(i)];
    }
    rec.dual = (grad + dual_term).norm();

    rec.primal_tolerance = opts.eps_abs * std::sqrt(constraints) +
                           opts.eps_rel * std::max(std::sqrt(aw_sq), std::sqrt(z_sq));
    rec.dual_tolerance = opts.eps_abs * std::sqrt(static_cast<double>(p * t)) + opts.eps_rel * dual_term.norm();
    return rec;
}

void check_symmetric(const Matrix& s) {
    const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
    if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        throw InputError("the feature similarity matrix must be symmetric");
    }
}

}  // namespace

SolveResult solve(const TaskDataset& data, const FusionGraph& graph, const PenaltyConfig& cfg,
                  const SolverOptions& opts) {
    cfg.validate();
    opts.validate();
    const auto h = build_temporal_operator(data.num_tasks());
    if (cfg.lambda2 != 0.0) check_symmetric(graph.s);

    const auto start = std::chrono::steady_clock::now();
    auto st = init_state(data, graph.s, h.values, cfg, opts.w_update);

    SolveResult result;
    double best = std::numeric_limits<double>::infinity();
    while (true) {
        update_W(st, graph.s, h.values);
        update_Q(st, cfg.lambda1);
        update_P(st, graph.s, cfg.lambda2);
        update_V(st, h.values, cfg.lambda3);
        update_duals(st, graph.s, h.values);
        ++st.iteration;

        auto rec = residuals(st, graph.s, h.values, opts);
        if (!std::isfinite(rec.primal) || !std::isfinite(rec.dual)) throw InternalError("ADMM iterate became non-finite");
        const auto decision = check_stopping(rec, st.iteration, opts);
        if (st.iteration % opts.trace_every == 0 || decision != StopDecision::Continue) {
            rec.terms = objective_terms(WeightMatrix{st.w}, data, graph, h, cfg);
            rec.objective = rec.terms.total();
            best = std::min(best, rec.objective);
            rec.best_objective = best;
            rec.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            result.trace.records.push_back(rec);
        }
        if (decision == StopDecision::Continue) continue;
        result.status = decision == StopDecision::Converged ? SolveStatus::Converged : SolveStatus::MaxIterations;
        break;
    }
    result.iterations = st.iteration;
    result.w.values = std::move(st.w);
    result.q = std::move(st.q);
    result.p = std::move(st.p);
    result.v = std::move(st.v);
    result.z_q = st.rho * st.u_q;
    result.z_p = st.rho * st.u_p;
    result.z_v = st.rho * st.u_v;
    return result;
}

void write_trace_csv(std::ostream& out, const ConvergenceTrace& trace) {
    out << "iteration,objective,loss,sparsity,graph,fusion,primal_q,primal_p,primal_v,primal,dual\n";
    for (const auto& r : trace.records) {
        out << r.iteration << ',' << format_double(r.objective) << ',' << format_double(r.terms.loss) << ','
            << format_double(r.terms.sparsity) << ',' << format_double(r.terms.graph) << ','
            << format_double(r.terms.fusion) << ',' << format_double(r.primal_q) << ','
            << format_double(r.primal_p) << ',' << format_double(r.primal_v) << ',' << format_double(r.primal)
            << ',' << format_double(r.dual) << '\n';
    }
}

}  // namespace mtlfsl
