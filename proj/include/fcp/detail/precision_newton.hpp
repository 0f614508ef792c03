#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "fcp/detail/coordinate_descent.hpp"
#include "fcp/types.hpp"

namespace fcp::detail {

struct PatternNewtonResult {
    Matrix theta;
    double grad_max = 0.0;
    long iterations = 0;
    bool converged = false;
};

// f(Theta) = -log det Theta + <Theta, S>, Theta free on the diagonal and on the
// listed off-diagonal pairs (j < k), zero elsewhere.
inline double logdet_objective(const Matrix& theta, const Matrix& s, bool& pd) {
    Eigen::LLT<Matrix> llt(theta);
    pd = llt.info() == Eigen::Success && (llt.matrixLLT().diagonal().array() > 0).all();
    if (!pd) return 0.0;
    return -2.0 * llt.matrixLLT().diagonal().array().log().sum() + theta.cwiseProduct(s).sum();
}

// Damped Newton on the pattern. Each free variable is a symmetric basis matrix
// E_a (e_j e_j' on the diagonal, e_j e_k' + e_k e_j' off it); the Hessian entry
// is tr(Sigma E_a Sigma E_b) with Sigma = Theta^{-1}.
inline PatternNewtonResult pattern_newton(const Matrix& s, const std::vector<std::pair<Index, Index>>& pairs,
                                          Matrix theta, double tol, long max_iter) {
    const Index q = s.rows();
    const Index nv = q + static_cast<Index>(pairs.size());
    struct Var {
        Index j, k;
    };
    std::vector<Var> vars;
    vars.reserve(static_cast<std::size_t>(nv));
    for (Index j = 0; j < q; ++j) vars.push_back({j, j});
    for (const auto& [j, k] : pairs) vars.push_back({j, k});

    PatternNewtonResult res;
    bool pd = false;
    double f = logdet_objective(theta, s, pd);
    if (!pd) {
        res.theta = std::move(theta);
        res.grad_max = std::numeric_limits<double>::infinity();
        return res;
    }

    Vector g(nv);
    Matrix h(nv, nv);
    for (; res.iterations < max_iter; ++res.iterations) {
        Eigen::LLT<Matrix> llt(theta);
        const Matrix sigma = llt.solve(Matrix::Identity(q, q));
        const Matrix r = s - sigma;
        for (Index a = 0; a < nv; ++a) {
            const auto& v = vars[static_cast<std::size_t>(a)];
            g[a] = v.j == v.k ? r(v.j, v.j) : 2.0 * r(v.j, v.k);
        }
        // stationarity in matrix terms: (S - Sigma) vanishes on the pattern
        double gm = 0.0;
        for (Index a = 0; a < nv; ++a) {
            const auto& v = vars[static_cast<std::size_t>(a)];
            gm = std::max(gm, std::abs(r(v.j, v.k)));
        }
        res.grad_max = gm;
        if (gm <= tol) {
            res.converged = true;
            break;
        }
        for (Index a = 0; a < nv; ++a) {
            const auto& va = vars[static_cast<std::size_t>(a)];
            for (Index b = a; b < nv; ++b) {
                const auto& vb = vars[static_cast<std::size_t>(b)];
                // tr(Sigma u v' Sigma x y') = Sigma(v,x) Sigma(y,u), summed over the
                // one or two rank-one terms of each basis matrix
                double val = 0.0;
                const Index ua[2] = {va.j, va.k}, wa[2] = {va.k, va.j};
                const Index ub[2] = {vb.j, vb.k}, wb[2] = {vb.k, vb.j};
                const int ta = va.j == va.k ? 1 : 2, tb = vb.j == vb.k ? 1 : 2;
                for (int x = 0; x < ta; ++x)
                    for (int y = 0; y < tb; ++y) val += sigma(wa[x], ub[y]) * sigma(wb[y], ua[x]);
                h(a, b) = val;
                h(b, a) = val;
            }
        }
        Eigen::LDLT<Matrix> ldlt(h);
        if (ldlt.info() != Eigen::Success) break;
        const Vector step = -ldlt.solve(g);
        if (!step.allFinite()) break;
        const double slope = g.dot(step);
        Matrix d = Matrix::Zero(q, q);
        for (Index a = 0; a < nv; ++a) {
            const auto& v = vars[static_cast<std::size_t>(a)];
            d(v.j, v.k) = step[a];
            d(v.k, v.j) = step[a];
        }
        double t = 1.0;
        bool moved = false;
        for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
            const Matrix cand = theta + t * d;
            bool cpd = false;
            const double fc = logdet_objective(cand, s, cpd);
            if (cpd && fc <= f + 1e-4 * t * slope + 1e-14 * std::abs(f)) {
                theta = cand;
                f = fc;
                moved = true;
                break;
            }
        }
        if (!moved) break;
    }
    res.theta = std::move(theta);
    return res;
}

struct GlassoResult {
    Matrix theta;
    double kkt = 0.0;
    long sweeps = 0;
    bool converged = false;
};

// KKT residual of -log det Theta + <Theta, S> + sum_{j != k} w_jk |theta_jk|:
//   (Theta^{-1} - S)_jj = 0 and (Theta^{-1} - S)_jk in w_jk d|theta_jk|.
inline double precision_kkt(const Matrix& s, const Matrix& w, const Matrix& theta, double zero_tol = 0.0) {
    Eigen::LLT<Matrix> llt(theta);
    if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
    const Index q = s.rows();
    const Matrix r = llt.solve(Matrix::Identity(q, q)) - s;
    double worst = 0.0;
    for (Index j = 0; j < q; ++j) {
        worst = std::max(worst, std::abs(r(j, j)));
        for (Index k = j + 1; k < q; ++k) {
            const double t = 0.5 * (theta(j, k) + theta(k, j));
            const double rr = 0.5 * (r(j, k) + r(k, j));
            const double v = std::abs(t) <= zero_tol ? std::max(0.0, std::abs(rr) - w(j, k))
                                                      : std::abs(rr - w(j, k) * sign(t));
            worst = std::max(worst, v);
        }
    }
    return worst;
}

// Graphical lasso with entrywise weights and an unpenalized diagonal: block
// coordinate ascent on W = Theta^{-1}, one weighted lasso per column, followed
// by a Newton polish on the sign pattern of the result.
inline GlassoResult weighted_glasso(const Matrix& s, const Matrix& w, double tol, long max_sweeps,
                                    double inner_tol, std::size_t polish_limit = 1500) {
    const Index q = s.rows();
    GlassoResult res;
    if (q == 1) {
        res.theta = Matrix::Constant(1, 1, 1.0 / s(0, 0));
        res.converged = true;
        return res;
    }
    Matrix wc = s;
    Matrix beta = Matrix::Zero(q - 1, q);
    std::vector<Index> others(static_cast<std::size_t>(q - 1));

    auto assemble = [&]() {
        Matrix theta = Matrix::Zero(q, q);
        for (Index j = 0; j < q; ++j) {
            Index c = 0;
            for (Index k = 0; k < q; ++k)
                if (k != j) others[static_cast<std::size_t>(c++)] = k;
            double w12b = 0.0;
            for (Index a = 0; a < q - 1; ++a) w12b += wc(others[static_cast<std::size_t>(a)], j) * beta(a, j);
            const double tjj = 1.0 / (wc(j, j) - w12b);
            theta(j, j) = tjj;
            for (Index a = 0; a < q - 1; ++a) theta(others[static_cast<std::size_t>(a)], j) = -beta(a, j) * tjj;
        }
        return Matrix(0.5 * (theta + theta.transpose()));
    };

    auto try_polish = [&](Matrix& theta, double& kkt) {
        std::vector<std::pair<Index, Index>> pairs;
        Matrix se = s;
        for (Index j = 0; j < q; ++j)
            for (Index k = j + 1; k < q; ++k)
                if (theta(j, k) != 0.0) {
                    pairs.emplace_back(j, k);
                    se(j, k) += w(j, k) * sign(theta(j, k));
                    se(k, j) = se(j, k);
                }
        if (pairs.size() > polish_limit) return;
        PatternNewtonResult pn = pattern_newton(se, pairs, theta, 0.1 * tol, 50);
        if (!pn.converged) return;
        for (const auto& [j, k] : pairs)
            if (sign(pn.theta(j, k)) != sign(theta(j, k))) return;
        const double pk = precision_kkt(s, w, pn.theta);
        if (pk <= kkt) {
            theta = std::move(pn.theta);
            kkt = pk;
        }
    };

    Matrix theta;
    while (res.sweeps < max_sweeps) {
        double change = 0.0;
        for (Index j = 0; j < q; ++j) {
            Index c = 0;
            for (Index k = 0; k < q; ++k)
                if (k != j) others[static_cast<std::size_t>(c++)] = k;
            Vector diag(q - 1), lin(q - 1), wt(q - 1);
            for (Index a = 0; a < q - 1; ++a) {
                const Index k = others[static_cast<std::size_t>(a)];
                diag[a] = wc(k, k);
                lin[a] = s(k, j);
                wt[a] = w(k, j);
            }
            auto column = [&](Index a, Vector& out) {
                const Index ka = others[static_cast<std::size_t>(a)];
                for (Index b = 0; b < q - 1; ++b) out[b] = wc(others[static_cast<std::size_t>(b)], ka);
            };
            auto qp = make_quadratic_l1(std::move(diag), std::move(lin), column);
            QuadraticL1Result sub = qp.solve(wt, beta.col(j), inner_tol, 100000);
            beta.col(j) = sub.beta;
            const Vector w12 = qp.product(sub.beta);
            for (Index a = 0; a < q - 1; ++a) {
                const Index k = others[static_cast<std::size_t>(a)];
                change = std::max(change, std::abs(wc(k, j) - w12[a]));
                wc(k, j) = w12[a];
                wc(j, k) = w12[a];
            }
        }
        ++res.sweeps;
        if (change <= tol * (1.0 + wc.cwiseAbs().maxCoeff()) || res.sweeps == max_sweeps) {
            theta = assemble();
            double kkt = precision_kkt(s, w, theta);
            if (kkt > tol) try_polish(theta, kkt);
            res.kkt = kkt;
            if (kkt <= tol) {
                res.converged = true;
                break;
            }
            if (change <= 1e-15 * (1.0 + wc.cwiseAbs().maxCoeff())) break;
        }
    }
    if (theta.size() == 0) {
        theta = assemble();
        res.kkt = precision_kkt(s, w, theta);
    }
    res.theta = std::move(theta);
    return res;
}

}  // namespace fcp::detail
