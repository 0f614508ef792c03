#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "fcp/errors.hpp"
#include "fcp/model.hpp"
#include "fcp/penalty.hpp"
#include "fcp/types.hpp"
#include "fcp/wl1_solvers.hpp"

namespace fcp {

enum class LlaMode { OneStep, TwoStep, KStep, Converged };

struct LlaConfig {
    LlaMode mode = LlaMode::TwoStep;
    int k = 2;  // number of weighted l1 solves in KStep mode
    PenaltySpec penalty = PenaltySpec::scad(1.0);
    SolverOptions solver_opts;
    double convergence_tol = 1e-8;
    int max_lla_iters = 50;

    int max_steps() const {
        switch (mode) {
            case LlaMode::OneStep: return 1;
            case LlaMode::TwoStep: return 2;
            case LlaMode::KStep: return k;
            case LlaMode::Converged: return max_lla_iters;
        }
        return 1;
    }

    void validate() const {
        if (mode == LlaMode::KStep && k < 1) throw ValidationError("k-step LLA needs k >= 1");
        if (!(convergence_tol > 0.0)) throw ValidationError("LLA convergence_tol must be positive");
        if (max_lla_iters < 1) throw ValidationError("max_lla_iters must be at least 1");
        solver_opts.validate();
    }
};

// iterates[0] is the initial estimate and weights[m] = P'(|iterates[m]|), so
// iterates[m + 1] solves the weighted problem with weights[m].
struct LlaTrace {
    std::vector<Estimate> iterates;
    std::vector<WeightVector> weights;
    std::vector<double> objectives;  // folded concave objective; +inf where the loss is undefined
    std::vector<SolverDiagnostics> solver;
    std::vector<double> max_change;  // ||iterates[m] - iterates[m-1]||_max, 0 for m = 0
    bool converged = false;
    bool fixed_point = false;
    int fixed_point_iteration = -1;

    int steps() const { return static_cast<int>(iterates.size()) - 1; }
};

struct LlaResult {
    Estimate estimate;
    LlaTrace trace;
};

// A weighted l1 solve inside the LLA loop failed; carries the 1-based LLA
// iteration, the solver's last iterate and the trace up to the failure.
class LlaConvergenceError : public ConvergenceFailure<Estimate> {
public:
    LlaConvergenceError(int lla_iteration, const ConvergenceFailure<Estimate>& inner, LlaTrace partial = {})
        : ConvergenceFailure<Estimate>("LLA iteration " + std::to_string(lla_iteration) + ": " + inner.what(),
                                       inner.residual(), inner.iterations(), inner.last_iterate()),
          lla_iteration_(lla_iteration), partial_(std::move(partial)) {}

    int lla_iteration() const noexcept { return lla_iteration_; }
    const LlaTrace& partial_trace() const noexcept { return partial_; }

private:
    int lla_iteration_;
    LlaTrace partial_;
};

// Weights P'(|value|): entrywise for vectors, off-diagonal for matrices.
inline WeightVector lla_weights(const PenaltySpec& pen, const Estimate& est) {
    if (est.is_matrix()) {
        const Matrix& t = est.matrix();
        const Index q = t.rows();
        Matrix w = Matrix::Zero(q, q);
        for (Index j = 0; j < q; ++j)
            for (Index k = j + 1; k < q; ++k) {
                const double v = pen.derivative(std::abs(0.5 * (t(j, k) + t(k, j))));
                w(j, k) = v;
                w(k, j) = v;
            }
        return WeightVector(std::move(w));
    }
    const Vector& b = est.vector();
    Vector w(b.size());
    for (Index j = 0; j < b.size(); ++j) w[j] = pen.derivative(std::abs(b[j]));
    return WeightVector(std::move(w));
}

inline double safe_objective(const Problem& problem, const Estimate& est, const PenaltySpec& pen) {
    try {
        return folded_concave_objective(problem, est, pen);
    } catch (const DomainError&) {
        return std::numeric_limits<double>::infinity();
    }
}

inline LlaResult lla_run(const Problem& problem, const LlaConfig& config, const Estimate& initial) {
    config.validate();
    problem.check_compatible(initial);
    LlaResult out;
    LlaTrace& tr = out.trace;
    tr.iterates.push_back(initial);
    tr.objectives.push_back(safe_objective(problem, initial, config.penalty));
    tr.max_change.push_back(0.0);
    tr.solver.push_back({"initial", 0, 0.0, true});

    const int steps = config.max_steps();
    for (int m = 1; m <= steps; ++m) {
        const Estimate& prev = tr.iterates.back();
        tr.weights.push_back(lla_weights(config.penalty, prev));
        SolverDiagnostics diag;
        SolveHints hints{&prev, &diag};
        Estimate next;
        try {
            next = solve_weighted_l1(problem, tr.weights.back(), config.solver_opts, hints);
        } catch (const ConvergenceFailure<Estimate>& e) {
            throw LlaConvergenceError(m, e, tr);
        }
        const double change = next.max_abs_diff(prev);
        tr.iterates.push_back(std::move(next));
        tr.objectives.push_back(safe_objective(problem, tr.iterates.back(), config.penalty));
        tr.max_change.push_back(change);
        tr.solver.push_back(diag);
        if (change <= config.convergence_tol) {
            tr.fixed_point = true;
            tr.fixed_point_iteration = m;
            if (config.mode == LlaMode::Converged) {
                tr.converged = true;
                break;
            }
        }
    }
    if (config.mode != LlaMode::Converged) tr.converged = true;
    out.estimate = tr.iterates.back();
    return out;
}

enum class InitializerKind { Zero, Lasso, Clime, DiagInverse };

inline std::string to_string(InitializerKind k) {
    switch (k) {
        case InitializerKind::Zero: return "zero";
        case InitializerKind::Lasso: return "lasso";
        case InitializerKind::Clime: return "clime";
        case InitializerKind::DiagInverse: return "diag-inverse";
    }
    return "?";
}

// Lasso uses uniform weights `lambda`; Clime uses `lambda` as its constraint
// level. Zero and DiagInverse ignore it.
inline Estimate make_initializer(InitializerKind kind, const Problem& problem, double lambda = 0.0,
                                 const SolverOptions& opts = {}) {
    switch (kind) {
        case InitializerKind::Zero:
            if (problem.is_precision()) throw ValidationError("zero is not a valid precision initializer");
            return problem.zero_estimate();
        case InitializerKind::Lasso:
            if (problem.is_precision()) throw ValidationError("lasso initializer is for vector problems");
            if (!(lambda > 0.0)) throw ValidationError("lasso initializer needs lambda > 0");
            return solve_weighted_l1(problem, WeightVector::uniform(problem.p(), lambda), opts);
        case InitializerKind::Clime:
            if (!problem.is_precision()) throw ValidationError("CLIME initializer is for precision problems");
            return solve_clime(problem.sample_cov(), lambda, opts);
        case InitializerKind::DiagInverse: {
            if (!problem.is_precision()) throw ValidationError("diag-inverse initializer is for precision problems");
            return Estimate(Matrix(problem.sample_cov().diagonal().cwiseInverse().asDiagonal()));
        }
    }
    throw ValidationError("unknown initializer");
}

// Residual of the restricted first-order condition at an oracle fit: the
// largest free-coordinate (sub)gradient distance from zero.
inline double oracle_condition_residual(const Problem& problem, const Estimate& est, const Support& support) {
    if (problem.is_precision()) {
        const Matrix g = loss_gradient(problem, est).matrix();
        const Index q = problem.p();
        double r = g.diagonal().cwiseAbs().maxCoeff();
        for (Index key : support) {
            const auto [j, k] = pair_from_key(q, key);
            r = std::max(r, std::abs(g(j, k)));
        }
        return r;
    }
    if (problem.kind() == LossKind::Quantile) {
        const SubgradientInterval iv = subgradient_interval(problem, est);
        double r = 0.0;
        for (Index j : support) r = std::max({r, iv.lo[j], -iv.hi[j]});
        return r;
    }
    const Vector g = loss_gradient(problem, est).vector();
    double r = 0.0;
    for (Index j : support) r = std::max(r, std::abs(g[j]));
    return r;
}

struct OracleCheck {
    double condition_residual = 0.0;
    bool condition_holds = false;  // residual <= 1e-6
};

inline Estimate oracle_estimator(const Problem& problem, const Support& true_support, const SolverOptions& opts = {},
                                 OracleCheck* check = nullptr) {
    Estimate est = solve_restricted(problem, true_support, opts);
    if (check) {
        check->condition_residual = oracle_condition_residual(problem, est, true_support);
        check->condition_holds = check->condition_residual <= 1e-6;
    }
    return est;
}

struct EventReport {
    double lambda = 0.0;
    FoldedConcaveConstants constants{};
    double a = 0.0;

    double init_error = 0.0;          // ||init - truth||_max
    double oracle_gradient = 0.0;     // ||grad_{A^c} loss(oracle)||_max
    double oracle_min_signal = 0.0;   // ||oracle_A||_min
    double truth_min_signal = 0.0;    // ||truth_A||_min

    bool e1_init_close = false;       // init_error <= a0 lambda
    bool e1_gradient_small = false;   // oracle_gradient < a1 lambda
    bool e2_signal_large = false;     // oracle_min_signal > a lambda
    bool a0_signal_condition = false; // truth_min_signal > (a + 1) lambda

    // positive when the corresponding inequality holds
    double init_margin() const { return constants.a0 * lambda - init_error; }
    double gradient_margin() const { return constants.a1 * lambda - oracle_gradient; }
    double signal_margin() const { return oracle_min_signal - a * lambda; }
    double truth_margin() const { return truth_min_signal - (a + 1.0) * lambda; }

    bool e1() const { return e1_init_close && e1_gradient_small; }
    bool e2() const { return e1_gradient_small && e2_signal_large; }

    Estimate oracle;
};

namespace detail {

inline double min_abs_on(const Estimate& est, const Support& support) {
    double m = std::numeric_limits<double>::infinity();
    if (est.is_matrix()) {
        const Index q = est.dimension();
        for (Index key : support) {
            const auto [j, k] = pair_from_key(q, key);
            m = std::min(m, std::abs(est.matrix()(j, k)));
        }
    } else {
        for (Index j : support) m = std::min(m, std::abs(est.vector()[j]));
    }
    return m;
}

inline std::vector<char> support_mask(Index size, const Support& support) {
    std::vector<char> mask(static_cast<std::size_t>(size), 0);
    for (Index j : support) mask[static_cast<std::size_t>(j)] = 1;
    return mask;
}

}  // namespace detail

// Off-support gradient size at a fitted estimate. For the check loss every
// attainable subgradient counts, so the larger interval end is used. For
// precision problems the off-diagonal pairs outside the support are scanned.
inline double off_support_gradient(const Problem& problem, const Estimate& est, const Support& support) {
    if (problem.is_precision()) {
        const Index q = problem.p();
        const Matrix g = loss_gradient(problem, est).matrix();
        const auto mask = detail::support_mask(q * q, support);
        double m = 0.0;
        for (Index j = 0; j < q; ++j)
            for (Index k = j + 1; k < q; ++k)
                if (!mask[static_cast<std::size_t>(pair_key(q, j, k))]) m = std::max(m, std::abs(g(j, k)));
        return m;
    }
    const auto mask = detail::support_mask(problem.p(), support);
    double m = 0.0;
    if (problem.kind() == LossKind::Quantile) {
        const SubgradientInterval iv = subgradient_interval(problem, est);
        for (Index j = 0; j < problem.p(); ++j)
            if (!mask[static_cast<std::size_t>(j)]) m = std::max({m, std::abs(iv.lo[j]), std::abs(iv.hi[j])});
        return m;
    }
    const Vector g = loss_gradient(problem, est).vector();
    for (Index j = 0; j < problem.p(); ++j)
        if (!mask[static_cast<std::size_t>(j)]) m = std::max(m, std::abs(g[j]));
    return m;
}

// Distance between an initial estimate and the truth in max norm; for
// precision matrices only off-diagonal entries count, as only they are
// weighted by the first LLA step.
inline double init_distance(const Estimate& initial, const Estimate& truth) {
    if (initial.is_matrix()) {
        Matrix d = (initial.matrix() - truth.matrix()).cwiseAbs();
        d.diagonal().setZero();
        return d.size() ? d.maxCoeff() : 0.0;
    }
    return initial.max_abs_diff(truth);
}

inline EventReport check_events(const Problem& problem, const PenaltySpec& penalty, const Estimate& initial,
                                const Estimate& truth, const Support& true_support, const Estimate& oracle) {
    problem.check_compatible(initial);
    problem.check_compatible(truth);
    EventReport r;
    r.lambda = penalty.lambda();
    r.constants = penalty.constants();
    r.a = penalty.a();
    r.init_error = init_distance(initial, truth);
    r.oracle_gradient = off_support_gradient(problem, oracle, true_support);
    r.oracle_min_signal = detail::min_abs_on(oracle, true_support);
    r.truth_min_signal = detail::min_abs_on(truth, true_support);
    r.e1_init_close = r.init_error <= r.constants.a0 * r.lambda;
    r.e1_gradient_small = r.oracle_gradient < r.constants.a1 * r.lambda;
    r.e2_signal_large = r.oracle_min_signal > r.a * r.lambda;
    r.a0_signal_condition = r.truth_min_signal > (r.a + 1.0) * r.lambda;
    r.oracle = oracle;
    return r;
}

inline EventReport check_events(const Problem& problem, const PenaltySpec& penalty, const Estimate& initial,
                                const Estimate& truth, const Support& true_support,
                                const SolverOptions& opts = {}) {
    return check_events(problem, penalty, initial, truth, true_support,
                        oracle_estimator(problem, true_support, opts));
}

}  // namespace fcp
