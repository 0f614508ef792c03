#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "fcp/types.hpp"

namespace fcp::detail {

// KKT residual of 0.5 b'Gb - c'b + sum w|b| given the gradient g = Gb - c.
inline double weighted_l1_kkt(const Vector& grad, const Vector& beta, const Vector& w) {
    double worst = 0.0;
    for (Index j = 0; j < beta.size(); ++j) {
        const double r = beta[j] == 0.0 ? std::max(0.0, std::abs(grad[j]) - w[j])
                                        : std::abs(grad[j] + w[j] * sign(beta[j]));
        worst = std::max(worst, r);
    }
    return worst;
}

struct QuadraticL1Result {
    Vector beta;
    double kkt = 0.0;
    long sweeps = 0;
    bool converged = false;
};

// Minimizes 0.5 b'Gb - c'b + sum_j w_j |b_j| by cyclic coordinate descent with
// an active-set inner loop. G is symmetric PSD and only touched through
// columns, which are computed lazily by `column(j, out)` and cached; the
// gradient Gb - c is kept up to date with covariance updates.
//
// Once the active set settles, the reduced stationarity system
//   G_FF b_F = c_F - w_F sign(b_F)
// is solved directly. The solve is kept only if it preserves signs and
// improves the KKT residual.
template <class ColumnFn>
class QuadraticL1 {
public:
    QuadraticL1(Vector diag, Vector linear, ColumnFn column)
        : diag_(std::move(diag)), linear_(std::move(linear)), column_(std::move(column)),
          cols_(static_cast<std::size_t>(diag_.size())),
          have_(static_cast<std::size_t>(diag_.size()), 0) {}

    Index dimension() const { return diag_.size(); }

    const Vector& col(Index j) {
        auto& c = cols_[static_cast<std::size_t>(j)];
        if (!have_[static_cast<std::size_t>(j)]) {
            c.resize(dimension());
            column_(j, c);
            have_[static_cast<std::size_t>(j)] = 1;
        }
        return c;
    }

    Vector product(const Vector& beta) {
        Vector gb = Vector::Zero(dimension());
        for (Index j = 0; j < beta.size(); ++j)
            if (beta[j] != 0.0) gb.noalias() += beta[j] * col(j);
        return gb;
    }

    QuadraticL1Result solve(const Vector& w, Vector beta, double tol, long max_sweeps) {
        const Index p = dimension();
        if (beta.size() != p) beta = Vector::Zero(p);
        Vector gb = product(beta);
        QuadraticL1Result res;

        auto update = [&](Index j) -> double {
            const double gjj = diag_[j];
            if (gjj <= 0.0) {
                if (beta[j] != 0.0) {
                    const double d = -beta[j];
                    beta[j] = 0.0;
                    gb.noalias() += d * col(j);
                    return std::abs(d);
                }
                return 0.0;
            }
            const double z = linear_[j] - gb[j] + gjj * beta[j];
            const double nb = soft_threshold(z, w[j]) / gjj;
            const double d = nb - beta[j];
            if (d != 0.0) {
                beta[j] = nb;
                gb.noalias() += d * col(j);
            }
            return std::abs(d);
        };

        std::vector<Index> active;
        while (res.sweeps < max_sweeps) {
            double change = 0.0;
            for (Index j = 0; j < p; ++j) change = std::max(change, update(j));
            ++res.sweeps;

            active.clear();
            for (Index j = 0; j < p; ++j)
                if (beta[j] != 0.0) active.push_back(j);

            double bmax = beta.size() ? beta.cwiseAbs().maxCoeff() : 0.0;
            if (change > tol * (1.0 + bmax)) {
                while (res.sweeps < max_sweeps) {
                    double inner = 0.0;
                    for (Index j : active) inner = std::max(inner, update(j));
                    ++res.sweeps;
                    bmax = beta.cwiseAbs().maxCoeff();
                    if (inner <= tol * (1.0 + bmax)) break;
                }
                continue;  // re-check with a full sweep
            }

            gb = product(beta);  // shed accumulated rounding before judging
            res.kkt = weighted_l1_kkt(gb - linear_, beta, w);
            if (res.kkt <= tol) {
                res.converged = true;
                break;
            }
        }
        if (!res.converged) {
            gb = product(beta);
            res.kkt = weighted_l1_kkt(gb - linear_, beta, w);
        }
        polish(w, beta, res);
        res.converged = res.converged || res.kkt <= tol;
        res.beta = std::move(beta);
        return res;
    }

private:
    void polish(const Vector& w, Vector& beta, QuadraticL1Result& res) {
        std::vector<Index> f;
        for (Index j = 0; j < beta.size(); ++j)
            if (beta[j] != 0.0) f.push_back(j);
        if (f.empty()) return;
        const Index m = static_cast<Index>(f.size());
        Matrix gff(m, m);
        Vector rhs(m);
        for (Index a = 0; a < m; ++a) {
            const Vector& c = col(f[static_cast<std::size_t>(a)]);
            for (Index b = 0; b < m; ++b) gff(b, a) = c[f[static_cast<std::size_t>(b)]];
            const Index j = f[static_cast<std::size_t>(a)];
            rhs[a] = linear_[j] - w[j] * sign(beta[j]);
        }
        Eigen::LDLT<Matrix> ldlt(gff);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return;
        const Vector vd = ldlt.vectorD();
        if ((vd.array() <= 1e-12 * vd.cwiseAbs().maxCoeff()).any()) return;
        const Vector sol = ldlt.solve(rhs);
        if (!sol.allFinite()) return;
        Vector cand = Vector::Zero(beta.size());
        for (Index a = 0; a < m; ++a) {
            const Index j = f[static_cast<std::size_t>(a)];
            if (sign(sol[a]) != sign(beta[j])) return;
            cand[j] = sol[a];
        }
        const Vector grad = product(cand) - linear_;
        const double kkt = weighted_l1_kkt(grad, cand, w);
        if (kkt <= res.kkt) {
            beta = std::move(cand);
            res.kkt = kkt;
        }
    }

    Vector diag_;
    Vector linear_;
    ColumnFn column_;
    std::vector<Vector> cols_;
    std::vector<char> have_;
};

template <class ColumnFn>
QuadraticL1<ColumnFn> make_quadratic_l1(Vector diag, Vector linear, ColumnFn column) {
    return QuadraticL1<ColumnFn>(std::move(diag), std::move(linear), std::move(column));
}

}  // namespace fcp::detail
