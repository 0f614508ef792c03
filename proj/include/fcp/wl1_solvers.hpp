#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "fcp/detail/coordinate_descent.hpp"
#include "fcp/detail/precision_newton.hpp"
#include "fcp/detail/simplex.hpp"
#include "fcp/errors.hpp"
#include "fcp/model.hpp"
#include "fcp/types.hpp"

namespace fcp {

enum class ClimeSymmetrization { MinMagnitude, Average };

struct SolverOptions {
    double tol = 1e-8;        // KKT residual target
    long max_iter = 10000;    // outer iterations (sweeps, Newton steps, simplex pivots / 10)
    double inner_tol = 1e-11; // inner quadratic subproblems
    ClimeSymmetrization clime_symmetrization = ClimeSymmetrization::MinMagnitude;

    void validate() const {
        if (!(tol > 0.0)) throw ValidationError("solver tol must be positive");
        if (max_iter < 1) throw ValidationError("solver max_iter must be at least 1");
        if (!(inner_tol > 0.0)) throw ValidationError("solver inner_tol must be positive");
    }
};

struct SolverDiagnostics {
    std::string method;
    long iterations = 0;
    double residual = 0.0;
    bool converged = false;
};

// Optional inputs/outputs shared by the solvers.
struct SolveHints {
    const Estimate* warm_start = nullptr;
    SolverDiagnostics* diagnostics = nullptr;
};

namespace detail {

inline void report(const SolveHints& hints, std::string method, long iters, double residual, bool ok) {
    if (hints.diagnostics) *hints.diagnostics = {std::move(method), iters, residual, ok};
}

inline Vector warm_vector(const SolveHints& hints, Index p) {
    if (hints.warm_start && !hints.warm_start->is_matrix() && hints.warm_start->dimension() == p)
        return hints.warm_start->vector();
    return Vector::Zero(p);
}

inline void clean_dust(Vector& b) {
    for (Index j = 0; j < b.size(); ++j)
        if (std::abs(b[j]) <= 1e-300) b[j] = 0.0;
}

// Weighted l1 quantile regression as an LP in standard form:
//   x = [b+, b-, u+, u-] >= 0,  X b+ - X b- + u+ - u- = y,
//   cost w'b+ + w'b- + (tau/n) 1'u+ + ((1-tau)/n) 1'u-.
// The basis of residual slacks is feasible, so phase 1 is never needed.
inline LpResult quantile_lp(const Matrix& x, const Vector& y, double tau, const Vector& w, long max_pivots) {
    const Index n = x.rows(), p = x.cols();
    Matrix a(n, 2 * p + 2 * n);
    a.leftCols(p) = x;
    a.middleCols(p, p) = -x;
    a.middleCols(2 * p, n).setIdentity();
    a.rightCols(n) = -Matrix::Identity(n, n);
    Vector c(2 * p + 2 * n);
    c.head(p) = w;
    c.segment(p, p) = w;
    c.segment(2 * p, n).setConstant(tau / static_cast<double>(n));
    c.tail(n).setConstant((1.0 - tau) / static_cast<double>(n));
    std::vector<Index> basis(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) basis[static_cast<std::size_t>(i)] = y[i] >= 0 ? 2 * p + i : 2 * p + n + i;
    LpOptions lo;
    lo.max_iter = max_pivots;
    return DenseSimplex(lo).solve(a, y, c, basis);
}

}  // namespace detail

inline Estimate solve_weighted_l1_linear(const Problem& problem, const WeightVector& w,
                                         const SolverOptions& opts = {}, const SolveHints& hints = {}) {
    if (problem.kind() != LossKind::Linear) throw ValidationError("linear solver needs a linear problem");
    problem.check_compatible(w);
    opts.validate();
    const Matrix& x = problem.design();
    const double n = static_cast<double>(problem.n());
    const Index p = problem.p();
    Vector diag = x.colwise().squaredNorm().transpose() / n;
    Vector lin = x.transpose() * problem.response() / n;
    auto column = [&x, n](Index j, Vector& out) { out.noalias() = x.transpose() * x.col(j) / n; };
    auto qp = detail::make_quadratic_l1(std::move(diag), std::move(lin), column);
    detail::QuadraticL1Result r = qp.solve(w.vector(), detail::warm_vector(hints, p), opts.tol, opts.max_iter);
    detail::clean_dust(r.beta);
    detail::report(hints, "coordinate-descent", r.sweeps, r.kkt, r.converged);
    if (!r.converged)
        throw ConvergenceFailure<Estimate>("weighted l1 linear solver did not reach the KKT tolerance", r.kkt,
                                           r.sweeps, Estimate(std::move(r.beta)));
    return Estimate(std::move(r.beta));
}

inline Estimate solve_weighted_l1_logistic(const Problem& problem, const WeightVector& w,
                                           const SolverOptions& opts = {}, const SolveHints& hints = {}) {
    if (problem.kind() != LossKind::Logistic) throw ValidationError("logistic solver needs a logistic problem");
    problem.check_compatible(w);
    opts.validate();
    const Matrix& x = problem.design();
    const Vector& y = problem.response();
    const Vector& wt = w.vector();
    const double n = static_cast<double>(problem.n());
    const Index p = problem.p();

    auto objective = [&](const Vector& b, const Vector& eta) {
        double f = 0.0;
        for (Index i = 0; i < eta.size(); ++i) f += -y[i] * eta[i] + log1p_exp(eta[i]);
        return f / n + b.cwiseAbs().dot(wt);
    };

    Vector beta = detail::warm_vector(hints, p);
    Vector eta = x * beta;
    double fval = objective(beta, eta);
    double kkt = std::numeric_limits<double>::infinity();
    long it = 0;
    for (; it < opts.max_iter; ++it) {
        Vector mu(eta.size()), d(eta.size());
        for (Index i = 0; i < eta.size(); ++i) {
            mu[i] = sigmoid(eta[i]);
            d[i] = std::max(mu[i] * (1.0 - mu[i]), 1e-12);
        }
        const Vector grad = x.transpose() * (mu - y) / n;
        kkt = detail::weighted_l1_kkt(grad, beta, wt);
        if (kkt <= opts.tol) break;

        Vector diag = (x.array().square().colwise() * d.array()).colwise().sum().transpose() / n;
        auto column = [&x, &d, n](Index j, Vector& out) {
            out.noalias() = x.transpose() * (d.array() * x.col(j).array()).matrix() / n;
        };
        // local model: 0.5 b'Hb - (H beta - grad)'b + w|b|, with H beta = X'(d eta)/n
        Vector lin = x.transpose() * (d.array() * eta.array()).matrix() / n - grad;
        auto qp = detail::make_quadratic_l1(std::move(diag), std::move(lin), column);
        const double itol = std::max(opts.inner_tol, std::min(1e-3, 0.01 * kkt));
        detail::QuadraticL1Result sub = qp.solve(wt, beta, itol, 100000);
        const Vector delta = sub.beta - beta;
        if (delta.cwiseAbs().maxCoeff() == 0.0) break;
        const Vector xd = x * delta;
        const double decrease = grad.dot(delta) + sub.beta.cwiseAbs().dot(wt) - beta.cwiseAbs().dot(wt);
        double t = 1.0;
        bool moved = false;
        for (int ls = 0; ls < 50; ++ls, t *= 0.5) {
            const Vector cand = beta + t * delta;
            const Vector ceta = eta + t * xd;
            const double fc = objective(cand, ceta);
            if (fc <= fval + 1e-4 * t * std::min(decrease, 0.0) + 1e-15 * std::abs(fval)) {
                beta = cand;
                eta = ceta;
                fval = fc;
                moved = true;
                break;
            }
        }
        if (!moved) break;
    }
    {
        Vector mu(eta.size());
        eta = x * beta;
        for (Index i = 0; i < eta.size(); ++i) mu[i] = sigmoid(eta[i]);
        kkt = detail::weighted_l1_kkt(x.transpose() * (mu - y) / n, beta, wt);
    }
    detail::clean_dust(beta);
    const bool ok = kkt <= opts.tol;
    detail::report(hints, "proximal-newton", it, kkt, ok);
    if (!ok)
        throw ConvergenceFailure<Estimate>("weighted l1 logistic solver did not reach the KKT tolerance", kkt, it,
                                           Estimate(std::move(beta)));
    return Estimate(std::move(beta));
}

inline Estimate solve_weighted_l1_quantile(const Problem& problem, const WeightVector& w,
                                           const SolverOptions& opts = {}, const SolveHints& hints = {}) {
    if (problem.kind() != LossKind::Quantile) throw ValidationError("quantile solver needs a quantile problem");
    problem.check_compatible(w);
    opts.validate();
    const Index p = problem.p();
    const long pivots = std::max<long>(opts.max_iter * 10, 1000);
    detail::LpResult lp = detail::quantile_lp(problem.design(), problem.response(), problem.tau(), w.vector(), pivots);
    Vector beta = lp.x.size() ? Vector(lp.x.head(p) - lp.x.segment(p, p)) : Vector::Zero(p);
    // dual feasibility of the final basis: A'y <= c
    double residual = std::numeric_limits<double>::infinity();
    if (lp.status == detail::LpStatus::Optimal) {
        const Matrix& x = problem.design();
        const double n = static_cast<double>(problem.n());
        const Vector xy = x.transpose() * lp.dual;
        residual = 0.0;
        for (Index j = 0; j < p; ++j) residual = std::max(residual, std::abs(xy[j]) - w.vector()[j]);
        for (Index i = 0; i < lp.dual.size(); ++i) {
            residual = std::max(residual, lp.dual[i] - problem.tau() / n);
            residual = std::max(residual, -lp.dual[i] - (1.0 - problem.tau()) / n);
        }
        residual = std::max(residual, 0.0);
    }
    const bool ok = lp.status == detail::LpStatus::Optimal && residual <= opts.tol;
    detail::report(hints, "simplex", lp.iterations, residual, ok);
    if (!ok)
        throw ConvergenceFailure<Estimate>("weighted l1 quantile LP did not reach an optimal basis", residual,
                                           lp.iterations, Estimate(std::move(beta)));
    return Estimate(std::move(beta));
}

inline Estimate solve_weighted_l1_precision(const Matrix& sample_cov, const WeightVector& w,
                                            const SolverOptions& opts = {}, const SolveHints& hints = {}) {
    const Problem problem = Problem::precision(sample_cov);
    problem.check_compatible(w);
    opts.validate();
    detail::GlassoResult g =
        detail::weighted_glasso(sample_cov, w.matrix(), opts.tol, opts.max_iter, opts.inner_tol);
    const bool ok = g.converged && is_positive_definite(g.theta);
    detail::report(hints, "weighted-glasso", g.sweeps, g.kkt, ok);
    if (!ok)
        throw ConvergenceFailure<Estimate>("weighted graphical lasso did not reach the KKT tolerance", g.kkt, g.sweeps,
                                           Estimate(std::move(g.theta)));
    return Estimate(std::move(g.theta));
}

inline Estimate solve_weighted_l1(const Problem& problem, const WeightVector& w, const SolverOptions& opts = {},
                                  const SolveHints& hints = {}) {
    switch (problem.kind()) {
        case LossKind::Linear: return solve_weighted_l1_linear(problem, w, opts, hints);
        case LossKind::Logistic: return solve_weighted_l1_logistic(problem, w, opts, hints);
        case LossKind::Quantile: return solve_weighted_l1_quantile(problem, w, opts, hints);
        case LossKind::Precision: return solve_weighted_l1_precision(problem.sample_cov(), w, opts, hints);
    }
    throw UnsupportedOperation("unknown loss kind");
}

struct ClimeResult {
    Matrix columns;            // per-column solutions before symmetrization
    Estimate estimate;         // symmetrized
    std::vector<Vector> duals; // LP duals per column, rows [upper; lower]
    long pivots = 0;
};

// CLIME: for each j, minimize ||theta||_1 subject to ||S theta - e_j||_inf <= lambda,
// as the LP over [u, v, s1, s2] >= 0 with theta = u - v,
//   S(u - v) + s1 = lambda + e_j,   -S(u - v) + s2 = lambda - e_j.
inline ClimeResult solve_clime_detailed(const Matrix& sample_cov, double lambda_clime, const SolverOptions& opts = {}) {
    if (!(lambda_clime > 0.0) || !std::isfinite(lambda_clime))
        throw ValidationError("CLIME lambda must be positive and finite");
    Problem::precision(sample_cov);  // validates S
    opts.validate();
    const Index q = sample_cov.rows();
    Matrix a = Matrix::Zero(2 * q, 4 * q);
    a.block(0, 0, q, q) = sample_cov;
    a.block(0, q, q, q) = -sample_cov;
    a.block(0, 2 * q, q, q).setIdentity();
    a.block(q, 0, q, q) = -sample_cov;
    a.block(q, q, q, q) = sample_cov;
    a.block(q, 3 * q, q, q).setIdentity();
    Vector c = Vector::Zero(4 * q);
    c.head(2 * q).setOnes();

    detail::LpOptions lo;
    lo.max_iter = std::max<long>(opts.max_iter * 10, 1000);
    detail::DenseSimplex simplex(lo);

    ClimeResult out;
    out.columns = Matrix::Zero(q, q);
    for (Index j = 0; j < q; ++j) {
        Vector b = Vector::Constant(2 * q, lambda_clime);
        b[j] += 1.0;
        b[q + j] -= 1.0;
        detail::LpResult lp = simplex.solve(a, b, c);
        out.pivots += lp.iterations;
        if (lp.status == detail::LpStatus::Infeasible)
            throw ValidationError("CLIME column " + std::to_string(j) + " is infeasible");
        Vector theta = lp.x.head(q) - lp.x.segment(q, q);
        detail::clean_dust(theta);
        const double viol = (sample_cov * theta - Vector::Unit(q, j)).cwiseAbs().maxCoeff() - lambda_clime;
        if (lp.status != detail::LpStatus::Optimal || viol > opts.tol)
            throw ConvergenceFailure<Estimate>("CLIME column " + std::to_string(j) + " did not solve", viol,
                                               lp.iterations, Estimate(Vector(theta)));
        out.columns.col(j) = theta;
        out.duals.push_back(std::move(lp.dual));
    }
    Matrix sym(q, q);
    for (Index j = 0; j < q; ++j)
        for (Index k = 0; k < q; ++k) {
            const double u = out.columns(j, k), v = out.columns(k, j);
            if (opts.clime_symmetrization == ClimeSymmetrization::Average)
                sym(j, k) = 0.5 * (u + v);
            else
                sym(j, k) = std::abs(u) <= std::abs(v) ? u : v;
        }
    out.estimate = Estimate(std::move(sym));
    return out;
}

inline Estimate solve_clime(const Matrix& sample_cov, double lambda_clime, const SolverOptions& opts = {}) {
    return solve_clime_detailed(sample_cov, lambda_clime, opts).estimate;
}

namespace detail {

inline Matrix support_columns(const Matrix& x, const Support& support) {
    Matrix xa(x.rows(), static_cast<Index>(support.size()));
    for (std::size_t a = 0; a < support.size(); ++a) {
        if (support[a] < 0 || support[a] >= x.cols()) throw ValidationError("support index out of range");
        xa.col(static_cast<Index>(a)) = x.col(support[a]);
    }
    return xa;
}

inline Vector scatter(const Vector& va, const Support& support, Index p) {
    Vector b = Vector::Zero(p);
    for (std::size_t a = 0; a < support.size(); ++a) b[support[a]] = va[static_cast<Index>(a)];
    return b;
}

// True when some direction d != 0 has z_i x_i'd >= 0 for every observation
// (z_i = 2y_i - 1) with strict inequality somewhere; the logistic likelihood
// then has no maximizer. Decided by the LP
//   max sum_i z_i x_i'd  s.t.  z_i x_i'd >= 0,  -1 <= d <= 1.
inline bool logistic_separable(const Matrix& x, const Vector& y) {
    const Index n = x.rows(), s = x.cols();
    const Matrix zx = (2.0 * y.array() - 1.0).matrix().asDiagonal() * x;
    // columns [d+, d-, e (n), t+ (s), t- (s)]
    Matrix a = Matrix::Zero(n + 2 * s, 2 * s + n + 2 * s);
    a.block(0, 0, n, s) = zx;
    a.block(0, s, n, s) = -zx;
    a.block(0, 2 * s, n, n) = -Matrix::Identity(n, n);
    a.block(n, 0, s, s).setIdentity();
    a.block(n, 2 * s + n, s, s).setIdentity();
    a.block(n + s, s, s, s).setIdentity();
    a.block(n + s, 2 * s + n + s, s, s).setIdentity();
    Vector b = Vector::Zero(n + 2 * s);
    b.tail(2 * s).setOnes();
    Vector c = Vector::Zero(a.cols());
    c.segment(2 * s, n).setConstant(-1.0);
    std::vector<Index> basis;
    for (Index i = 0; i < n; ++i) basis.push_back(2 * s + i);
    for (Index j = 0; j < 2 * s; ++j) basis.push_back(2 * s + n + j);
    const LpResult lp = DenseSimplex().solve(a, b, c, basis);
    return lp.status == LpStatus::Optimal && -lp.objective > 1e-9 * (1.0 + x.cwiseAbs().maxCoeff());
}

}  // namespace detail

// Unpenalized fit with every coefficient outside `support` held at zero. For
// precision problems `support` lists off-diagonal pair keys; the diagonal is
// always free.
inline Estimate solve_restricted(const Problem& problem, const Support& support, const SolverOptions& opts = {},
                                 SolverDiagnostics* diagnostics = nullptr) {
    opts.validate();
    SolveHints hints{nullptr, diagnostics};
    if (problem.is_precision()) {
        const Matrix& s = problem.sample_cov();
        const Index q = s.rows();
        std::vector<std::pair<Index, Index>> pairs;
        for (Index key : support) {
            const auto [j, k] = pair_from_key(q, key);
            if (key < 0 || j >= k || k >= q) throw ValidationError("invalid off-diagonal pair key");
            pairs.emplace_back(j, k);
        }
        Matrix theta0 = s.diagonal().cwiseInverse().asDiagonal();
        detail::PatternNewtonResult r = detail::pattern_newton(s, pairs, std::move(theta0), opts.tol,
                                                               std::min<long>(opts.max_iter, 500));
        detail::report(hints, "pattern-newton", r.iterations, r.grad_max, r.converged);
        if (!r.converged)
            throw ConvergenceFailure<Estimate>("restricted precision MLE did not converge", r.grad_max, r.iterations,
                                               Estimate(std::move(r.theta)));
        return Estimate(std::move(r.theta));
    }

    const Index p = problem.p();
    if (support.empty()) {
        detail::report(hints, "empty-support", 0, 0.0, true);
        return Estimate::zeros(p);
    }
    const Matrix xa = detail::support_columns(problem.design(), support);
    const Vector& y = problem.response();
    const double n = static_cast<double>(problem.n());
    const Index s = xa.cols();

    switch (problem.kind()) {
        case LossKind::Linear: {
            Eigen::ColPivHouseholderQR<Matrix> qr(xa);
            qr.setThreshold(1e-10);
            if (qr.rank() < s) throw SingularityError("restricted design is rank deficient");
            const Vector ba = qr.solve(y);
            detail::report(hints, "householder-qr", 1, 0.0, true);
            return Estimate(detail::scatter(ba, support, p));
        }
        case LossKind::Logistic: {
            {
                Eigen::ColPivHouseholderQR<Matrix> qr(xa);
                qr.setThreshold(1e-10);
                if (qr.rank() < s) throw SingularityError("restricted design is rank deficient");
            }
            if (detail::logistic_separable(xa, y)) {
                detail::report(hints, "newton", 0, std::numeric_limits<double>::infinity(), false);
                throw ConvergenceFailure<Estimate>("restricted logistic MLE does not exist (separated data)",
                                                   std::numeric_limits<double>::infinity(), 0, Estimate::zeros(p));
            }
            Vector ba = Vector::Zero(s);
            Vector eta = Vector::Zero(xa.rows());
            auto lossf = [&](const Vector& e) {
                double f = 0.0;
                for (Index i = 0; i < e.size(); ++i) f += -y[i] * e[i] + log1p_exp(e[i]);
                return f / n;
            };
            double f = lossf(eta);
            double gmax = std::numeric_limits<double>::infinity();
            long it = 0;
            const long cap = std::min<long>(opts.max_iter, 200);
            for (; it < cap; ++it) {
                Vector mu(eta.size()), d(eta.size());
                for (Index i = 0; i < eta.size(); ++i) {
                    mu[i] = sigmoid(eta[i]);
                    d[i] = mu[i] * (1.0 - mu[i]);
                }
                const Vector g = xa.transpose() * (mu - y) / n;
                gmax = g.cwiseAbs().maxCoeff();
                if (gmax <= opts.tol) break;
                const Matrix h = xa.transpose() * d.asDiagonal() * xa / n;
                Eigen::LDLT<Matrix> ldlt(h);
                const Vector step = -ldlt.solve(g);
                if (ldlt.info() != Eigen::Success || !step.allFinite()) break;
                const Vector xs = xa * step;
                double t = 1.0;
                bool moved = false;
                for (int ls = 0; ls < 50; ++ls, t *= 0.5) {
                    const Vector ce = eta + t * xs;
                    const double fc = lossf(ce);
                    if (fc <= f + 1e-4 * t * g.dot(step) + 1e-15 * std::abs(f)) {
                        ba += t * step;
                        eta = ce;
                        f = fc;
                        moved = true;
                        break;
                    }
                }
                if (!moved) break;
            }
            const bool ok = gmax <= opts.tol;
            detail::report(hints, "newton", it, gmax, ok);
            if (!ok)
                throw ConvergenceFailure<Estimate>(
                    "restricted logistic MLE did not converge (possible separation)", gmax, it,
                    Estimate(detail::scatter(ba, support, p)));
            return Estimate(detail::scatter(ba, support, p));
        }
        case LossKind::Quantile: {
            const long pivots = std::max<long>(opts.max_iter * 10, 1000);
            detail::LpResult lp =
                detail::quantile_lp(xa, y, problem.tau(), Vector::Zero(s), pivots);
            const bool ok = lp.status == detail::LpStatus::Optimal;
            Vector ba = lp.x.size() ? Vector(lp.x.head(s) - lp.x.segment(s, s)) : Vector::Zero(s);
            detail::report(hints, "simplex", lp.iterations, 0.0, ok);
            if (!ok)
                throw ConvergenceFailure<Estimate>("restricted quantile LP did not reach an optimal basis",
                                                   std::numeric_limits<double>::infinity(), lp.iterations,
                                                   Estimate(detail::scatter(ba, support, p)));
            return Estimate(detail::scatter(ba, support, p));
        }
        case LossKind::Precision: break;
    }
    throw UnsupportedOperation("unknown loss kind");
}

// Smallest uniform weight for which zero solves the weighted l1 problem.
inline double lambda_max(const Problem& problem) {
    if (problem.is_precision()) {
        const Matrix& s = problem.sample_cov();
        double m = 0.0;
        for (Index j = 0; j < s.rows(); ++j)
            for (Index k = j + 1; k < s.cols(); ++k) m = std::max(m, std::abs(s(j, k)));
        return m;
    }
    const Estimate zero = problem.zero_estimate();
    if (problem.kind() == LossKind::Quantile) {
        const SubgradientInterval iv = subgradient_interval(problem, zero);
        double m = 0.0;
        for (Index j = 0; j < iv.lo.size(); ++j) m = std::max({m, std::abs(iv.lo[j]), std::abs(iv.hi[j])});
        return m;
    }
    return loss_gradient(problem, zero).vector().cwiseAbs().maxCoeff();
}

}  // namespace fcp
