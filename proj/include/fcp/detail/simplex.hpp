#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "fcp/types.hpp"

namespace fcp::detail {

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit };

struct LpOptions {
    long max_iter = 100000;
    double feas_tol = 1e-9;
    double opt_tol = 1e-11;
    double pivot_tol = 1e-9;
    int refactor_every = 50;
    int degenerate_limit = 30;
};

struct LpResult {
    LpStatus status = LpStatus::IterationLimit;
    Vector x;     // primal solution, one entry per column of A
    Vector dual;  // y with A'y <= c at optimality
    double objective = 0.0;
    long iterations = 0;
    std::vector<Index> basis;
};

// Revised primal simplex on dense data for
//     minimize c'x  subject to  A x = b,  x >= 0.
// Keeps an explicit basis inverse with product-form updates and periodic
// refactorization. Pricing is Dantzig's rule with a Harris ratio test; after a
// run of degenerate pivots it falls back to Bland's rule until progress
// resumes. A caller-supplied feasible basis skips phase 1.
class DenseSimplex {
public:
    explicit DenseSimplex(LpOptions opts = {}) : opts_(opts) {}

    LpResult solve(const Matrix& a, const Vector& b, const Vector& c,
                   const std::vector<Index>& basis_hint = {}) const {
        const Index m = a.rows();
        const Index ncols = a.cols();
        LpResult out;

        if (static_cast<Index>(basis_hint.size()) == m) {
            Matrix bmat(m, m);
            for (Index i = 0; i < m; ++i) bmat.col(i) = a.col(basis_hint[static_cast<std::size_t>(i)]);
            Eigen::PartialPivLU<Matrix> lu(bmat);
            const Vector xb = lu.solve(b);
            if (xb.allFinite() && (xb.array() >= -opts_.feas_tol).all() &&
                (bmat * xb - b).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + b.cwiseAbs().maxCoeff())) {
                std::vector<char> enterable(static_cast<std::size_t>(ncols), 1);
                std::vector<Index> basis = basis_hint;
                out.status = run(a, b, c, basis, enterable, out.iterations);
                finish(a, b, c, basis, ncols, out);
                return out;
            }
        }

        // Phase 1: flip rows so b >= 0 and add one artificial per row.
        Vector flip = Vector::Ones(m);
        for (Index i = 0; i < m; ++i)
            if (b[i] < 0) flip[i] = -1.0;
        Matrix aug(m, ncols + m);
        aug.leftCols(ncols) = flip.asDiagonal() * a;
        aug.rightCols(m).setIdentity();
        const Vector b1 = flip.cwiseProduct(b);
        Vector c1 = Vector::Zero(ncols + m);
        c1.tail(m).setOnes();
        std::vector<Index> basis(static_cast<std::size_t>(m));
        for (Index i = 0; i < m; ++i) basis[static_cast<std::size_t>(i)] = ncols + i;
        std::vector<char> enterable(static_cast<std::size_t>(ncols + m), 1);

        LpStatus st = run(aug, b1, c1, basis, enterable, out.iterations);
        if (st == LpStatus::IterationLimit) {
            out.status = st;
            finish(aug, b1, c1, basis, ncols, out);
            return out;
        }
        {
            const Vector xb = basic_values(aug, b1, basis);
            double infeas = 0.0;
            for (Index i = 0; i < m; ++i)
                if (basis[static_cast<std::size_t>(i)] >= ncols) infeas += std::max(0.0, xb[i]);
            if (infeas > 1e-8 * (1.0 + b1.cwiseAbs().maxCoeff())) {
                out.status = LpStatus::Infeasible;
                return out;
            }
        }
        drive_out_artificials(aug, basis, ncols);

        for (Index j = ncols; j < ncols + m; ++j) enterable[static_cast<std::size_t>(j)] = 0;
        Vector c2 = Vector::Zero(ncols + m);
        c2.head(ncols) = c;
        out.status = run(aug, b1, c2, basis, enterable, out.iterations);
        finish(aug, b1, c2, basis, ncols, out);
        out.dual = flip.cwiseProduct(out.dual);
        return out;
    }

private:
    static Vector basic_values(const Matrix& a, const Vector& b, const std::vector<Index>& basis) {
        const Index m = a.rows();
        Matrix bmat(m, m);
        for (Index i = 0; i < m; ++i) bmat.col(i) = a.col(basis[static_cast<std::size_t>(i)]);
        return Eigen::PartialPivLU<Matrix>(bmat).solve(b);
    }

    static Matrix basis_inverse(const Matrix& a, const std::vector<Index>& basis) {
        const Index m = a.rows();
        Matrix bmat(m, m);
        for (Index i = 0; i < m; ++i) bmat.col(i) = a.col(basis[static_cast<std::size_t>(i)]);
        return Eigen::PartialPivLU<Matrix>(bmat).inverse();
    }

    void finish(const Matrix& a, const Vector& b, const Vector& c, const std::vector<Index>& basis,
                Index ncols, LpResult& out) const {
        const Index m = a.rows();
        const Matrix binv = basis_inverse(a, basis);
        Vector xb = binv * b;
        Vector cb(m);
        for (Index i = 0; i < m; ++i) cb[i] = c[basis[static_cast<std::size_t>(i)]];
        out.dual = binv.transpose() * cb;
        out.x = Vector::Zero(ncols);
        for (Index i = 0; i < m; ++i) {
            const Index j = basis[static_cast<std::size_t>(i)];
            if (j < ncols) out.x[j] = std::max(0.0, xb[i]);
        }
        out.objective = c.head(ncols).dot(out.x);
        out.basis = basis;
    }

    void drive_out_artificials(const Matrix& aug, std::vector<Index>& basis, Index ncols) const {
        const Index m = aug.rows();
        std::vector<char> in_basis(static_cast<std::size_t>(aug.cols()), 0);
        for (Index j : basis) in_basis[static_cast<std::size_t>(j)] = 1;
        for (Index r = 0; r < m; ++r) {
            if (basis[static_cast<std::size_t>(r)] < ncols) continue;
            const Matrix binv = basis_inverse(aug, basis);
            const Vector row = binv.row(r) * aug.leftCols(ncols);
            Index best = -1;
            double best_val = 1e-7;
            for (Index j = 0; j < ncols; ++j) {
                if (in_basis[static_cast<std::size_t>(j)]) continue;
                if (std::abs(row[j]) > best_val) {
                    best_val = std::abs(row[j]);
                    best = j;
                }
            }
            if (best >= 0) {
                in_basis[static_cast<std::size_t>(basis[static_cast<std::size_t>(r)])] = 0;
                basis[static_cast<std::size_t>(r)] = best;
                in_basis[static_cast<std::size_t>(best)] = 1;
            }
            // otherwise the row is redundant and its artificial stays basic at zero
        }
    }

    LpStatus run(const Matrix& a, const Vector& b, const Vector& c, std::vector<Index>& basis,
                 const std::vector<char>& enterable, long& iterations) const {
        const Index m = a.rows();
        const Index ncols = a.cols();
        std::vector<char> is_basic(static_cast<std::size_t>(ncols), 0);
        for (Index j : basis) is_basic[static_cast<std::size_t>(j)] = 1;

        Matrix binv = basis_inverse(a, basis);
        Vector xb = binv * b;
        Vector cb(m);
        int since_refactor = 0;
        int degenerate_run = 0;
        bool bland = false;

        while (iterations < opts_.max_iter) {
            if (since_refactor >= opts_.refactor_every) {
                binv = basis_inverse(a, basis);
                xb = binv * b;
                since_refactor = 0;
            }
            for (Index i = 0; i < m; ++i) cb[i] = c[basis[static_cast<std::size_t>(i)]];
            const Vector y = binv.transpose() * cb;
            const Vector reduced = c - a.transpose() * y;

            Index enter = -1;
            double best = -opts_.opt_tol;
            for (Index j = 0; j < ncols; ++j) {
                if (is_basic[static_cast<std::size_t>(j)] || !enterable[static_cast<std::size_t>(j)]) continue;
                const double tol = opts_.opt_tol * (1.0 + std::abs(c[j]));
                if (reduced[j] >= -tol) continue;
                if (bland) {
                    enter = j;
                    break;
                }
                if (reduced[j] < best) {
                    best = reduced[j];
                    enter = j;
                }
            }
            if (enter < 0) return LpStatus::Optimal;

            const Vector u = binv * a.col(enter);

            // Harris two-pass ratio test.
            double bound = std::numeric_limits<double>::infinity();
            for (Index i = 0; i < m; ++i)
                if (u[i] > opts_.pivot_tol)
                    bound = std::min(bound, (std::max(xb[i], 0.0) + opts_.feas_tol) / u[i]);
            if (!std::isfinite(bound)) return LpStatus::Unbounded;
            Index leave = -1;
            if (bland) {
                double min_ratio = std::numeric_limits<double>::infinity();
                for (Index i = 0; i < m; ++i)
                    if (u[i] > opts_.pivot_tol) min_ratio = std::min(min_ratio, std::max(xb[i], 0.0) / u[i]);
                for (Index i = 0; i < m; ++i) {
                    if (u[i] <= opts_.pivot_tol) continue;
                    if (std::max(xb[i], 0.0) / u[i] <= min_ratio + 1e-12 &&
                        (leave < 0 || basis[static_cast<std::size_t>(i)] < basis[static_cast<std::size_t>(leave)]))
                        leave = i;
                }
            } else {
                double big = 0.0;
                for (Index i = 0; i < m; ++i) {
                    if (u[i] <= opts_.pivot_tol) continue;
                    if (std::max(xb[i], 0.0) / u[i] <= bound && u[i] > big) {
                        big = u[i];
                        leave = i;
                    }
                }
            }
            const double theta = std::max(xb[leave], 0.0) / u[leave];

            xb -= theta * u;
            xb[leave] = theta;
            for (Index i = 0; i < m; ++i)
                if (xb[i] < 0 && xb[i] > -opts_.feas_tol) xb[i] = 0.0;

            const double piv = u[leave];
            binv.row(leave) /= piv;
            for (Index i = 0; i < m; ++i)
                if (i != leave && u[i] != 0.0) binv.row(i) -= u[i] * binv.row(leave);

            is_basic[static_cast<std::size_t>(basis[static_cast<std::size_t>(leave)])] = 0;
            basis[static_cast<std::size_t>(leave)] = enter;
            is_basic[static_cast<std::size_t>(enter)] = 1;
            ++iterations;
            ++since_refactor;

            if (theta <= 1e-12) {
                if (++degenerate_run >= opts_.degenerate_limit) bland = true;
            } else {
                degenerate_run = 0;
                bland = false;
            }
        }
        return LpStatus::IterationLimit;
    }

    LpOptions opts_;
};

}  // namespace fcp::detail
